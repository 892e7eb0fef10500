//! Analysis toolkit for EPRB (Einstein-Podolsky-Rosen-Bohm) experiments that
//! gate photon detections with Pockels cell openings.
//!
//! The crate has two halves that meet at the [`ch`] metrics:
//!
//! * an event pipeline: [`ingest`] parses time-tagged event files and
//!   compiles them to a compact binary, [`analysis`] runs the streaming O(T)
//!   window/coincidence engine over the compiled data, and [`accidentals`]
//!   assesses accidental coincidences with a variable-window greedy scan;
//! * a simulator: [`quantum`] models a nonmaximal entangled pair behind
//!   single-channel analyzers, and [`sim`] turns that into Monte Carlo
//!   experiments plus a Powell direction-set search of the angle space.

pub mod accidentals;
pub mod analysis;
pub mod ch;
pub mod ingest;
pub mod powell;
pub mod quantum;
pub mod seeds;
pub mod sim;

/// Analyzer setting combination for one trial.
///
/// The experiment switches between two analyzer angles per side, giving four
/// combinations. Order matters: count tables and binary records store the
/// four settings in this sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Setting {
    A1B1 = 0,
    A1B2 = 1,
    A2B1 = 2,
    A2B2 = 3,
}

impl Setting {
    pub const ALL: [Setting; 4] = [Setting::A1B1, Setting::A1B2, Setting::A2B1, Setting::A2B2];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Setting> {
        Setting::ALL.get(i).copied()
    }

    /// Two-digit code used in the text event format (11, 12, 21, 22).
    pub fn code(self) -> u32 {
        match self {
            Setting::A1B1 => 11,
            Setting::A1B2 => 12,
            Setting::A2B1 => 21,
            Setting::A2B2 => 22,
        }
    }

    pub fn from_code(code: u32) -> Option<Setting> {
        match code {
            11 => Some(Setting::A1B1),
            12 => Some(Setting::A1B2),
            21 => Some(Setting::A2B1),
            22 => Some(Setting::A2B2),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Setting::A1B1 => "a1b1",
            Setting::A1B2 => "a1b2",
            Setting::A2B1 => "a2b1",
            Setting::A2B2 => "a2b2",
        }
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Detector side. Side one is channel 1 in the event files, side two is
/// channel 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    One,
    Two,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::One, Side::Two];

    pub fn channel(self) -> u8 {
        match self {
            Side::One => 1,
            Side::Two => 2,
        }
    }

    pub fn from_channel(ch: u8) -> Option<Side> {
        match ch {
            1 => Some(Side::One),
            2 => Some(Side::Two),
            _ => None,
        }
    }
}
