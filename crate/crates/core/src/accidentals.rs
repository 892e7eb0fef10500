//! Variable-window greedy coincidence scanning.
//!
//! Accidental coincidences betray themselves through the derivative dC/dW of
//! the coincidence count against the window size: once the window exceeds
//! the detection jitter, true pairs are all tallied and any further growth
//! comes from accidentals. The scan builds that curve per setting, together
//! with the CH metric recomputed at each window size.

use rayon::prelude::*;

use crate::analysis::{AnalysisError, AnalysisParams, DelaySet};
use crate::ch::{self, CountTable};
use crate::ingest::CompiledFile;
use crate::{Setting, Side};

const PS_PER_NS: f64 = 1e3;

/// Per-setting, per-side sorted lists of delay-corrected detection times
/// (picoseconds), restricted to events inside an opening.
#[derive(Debug, Clone, Default)]
pub struct EventLists {
    /// Indexed by [`Setting::index`]; `.0` is side 1, `.1` is side 2.
    pub per_setting: [(Vec<f64>, Vec<f64>); 4],
}

impl EventLists {
    pub fn singles(&self, setting: Setting) -> (u64, u64) {
        let (a, b) = &self.per_setting[setting.index()];
        (a.len() as u64, b.len() as u64)
    }
}

/// Correct every detection for time of flight, drop events outside a Pockels
/// cell opening (window = the full opening duration), and return the
/// remaining corrected times sorted per setting and side.
pub fn prepare_event_lists(
    file: &CompiledFile,
    delays: DelaySet,
    opening_us: f64,
    period_us: f64,
) -> Result<EventLists, AnalysisError> {
    let params = AnalysisParams {
        window: opening_us,
        delays,
        period: period_us,
        ..AnalysisParams::default()
    };
    params.validate()?;
    let window_ps = opening_us * 1e6;
    let period_ps = period_us * 1e6;

    let mut lists = EventLists::default();
    for ev in &file.events {
        if ev.pockels_time == f64::NEG_INFINITY {
            continue;
        }
        let corrected = ev.raw_time - delays.for_side(ev.channel) * 1e6;
        let in_window = if corrected >= ev.pockels_time {
            corrected < ev.pockels_time + window_ps
        } else {
            let prev = ev.pockels_time - period_ps;
            corrected >= prev && corrected < prev + window_ps
        };
        if !in_window {
            continue;
        }
        let entry = &mut lists.per_setting[ev.setting.index()];
        match ev.channel {
            Side::One => entry.0.push(corrected),
            Side::Two => entry.1.push(corrected),
        }
    }
    // raw times ascend and each side subtracts a constant delay, so the
    // lists are already sorted; make that an invariant rather than a hope
    for (a, b) in &mut lists.per_setting {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
    }
    Ok(lists)
}

/// Earliest-first single-use pairing of two sorted time lists: two pointers
/// advance past whichever unmatched event is earlier, and a pair is tallied
/// whenever |t_a − t_b| ≤ window (boundary inclusive). O(n_a + n_b).
pub fn greedy_coincidences(list_a: &[f64], list_b: &[f64], window_ps: f64) -> u64 {
    let mut i = 0;
    let mut j = 0;
    let mut count = 0;
    while i < list_a.len() && j < list_b.len() {
        let dt = list_b[j] - list_a[i];
        if dt > window_ps {
            i += 1;
        } else if -dt > window_ps {
            j += 1;
        } else {
            count += 1;
            i += 1;
            j += 1;
        }
    }
    count
}

/// Plot-ready dataset: coincidence counts, CH metric, and dC/dW per window
/// size.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceCurve {
    /// Window sizes, nanoseconds, ascending.
    pub windows_ns: Vec<f64>,
    /// Per setting: C(W) on the grid.
    pub counts: [Vec<u64>; 4],
    /// CH metric per window size, from these coincidences with fixed singles
    /// and trials.
    pub ch: Vec<f64>,
    /// Central-difference dC/dW (counts per nanosecond) per setting.
    pub dcdw: [Vec<f64>; 4],
    /// True when, beyond the knee, every setting's slope stays below
    /// `threshold_fraction` of C(W)/W.
    pub negligible: bool,
    pub knee_ns: f64,
    pub threshold_fraction: f64,
}

/// Scan the coincidence count over a window grid.
///
/// The CH metric at each grid point reuses the fixed in-window singles and
/// the file's trial totals; only the coincidences vary with W.
pub fn scan_curve(
    file: &CompiledFile,
    delays: DelaySet,
    windows_ns: &[f64],
    opening_us: f64,
    period_us: f64,
    knee_ns: f64,
    threshold_fraction: f64,
) -> Result<CoincidenceCurve, AnalysisError> {
    if windows_ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(AnalysisError::NonPositiveWindow(f64::NAN));
    }
    if let Some(&w) = windows_ns.first() {
        if w < 0.0 {
            return Err(AnalysisError::NonPositiveWindow(w / 1e3));
        }
    }
    let lists = prepare_event_lists(file, delays, opening_us, period_us)?;

    let counts_flat: Vec<[u64; 4]> = windows_ns
        .par_iter()
        .map(|&w_ns| {
            let w_ps = w_ns * PS_PER_NS;
            Setting::ALL.map(|s| {
                let (a, b) = &lists.per_setting[s.index()];
                greedy_coincidences(a, b, w_ps)
            })
        })
        .collect();

    let mut counts: [Vec<u64>; 4] = Default::default();
    for row in &counts_flat {
        for (s, c) in row.iter().enumerate() {
            counts[s].push(*c);
        }
    }

    let trials = file.total_trials.map(u64::from);
    let ch: Vec<f64> = counts_flat
        .iter()
        .map(|row| {
            let mut table = CountTable {
                coincidences: *row,
                trials,
                ..CountTable::default()
            };
            for s in Setting::ALL {
                let (sa, sb) = lists.singles(s);
                table.singles_a[s.index()] = sa;
                table.singles_b[s.index()] = sb;
            }
            ch::ch_linear(&table, false)
                .map(|r| r.ch_linear)
                .unwrap_or(f64::NAN)
        })
        .collect();

    let dcdw: [Vec<f64>; 4] = core::array::from_fn(|s| derivative(windows_ns, &counts[s]));
    let negligible = is_negligible(windows_ns, &counts, &dcdw, knee_ns, threshold_fraction);

    Ok(CoincidenceCurve {
        windows_ns: windows_ns.to_vec(),
        counts,
        ch,
        dcdw,
        negligible,
        knee_ns,
        threshold_fraction,
    })
}

fn derivative(x: &[f64], y: &[u64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            if n < 2 {
                0.0
            } else if i == 0 {
                (y[1] as f64 - y[0] as f64) / (x[1] - x[0])
            } else if i == n - 1 {
                (y[n - 1] as f64 - y[n - 2] as f64) / (x[n - 1] - x[n - 2])
            } else {
                (y[i + 1] as f64 - y[i - 1] as f64) / (x[i + 1] - x[i - 1])
            }
        })
        .collect()
}

fn is_negligible(
    windows_ns: &[f64],
    counts: &[Vec<u64>; 4],
    dcdw: &[Vec<f64>; 4],
    knee_ns: f64,
    threshold_fraction: f64,
) -> bool {
    for s in 0..4 {
        for (i, &w) in windows_ns.iter().enumerate() {
            if w <= knee_ns || w <= 0.0 {
                continue;
            }
            let density = counts[s][i] as f64 / w;
            if dcdw[s][i] > threshold_fraction * density {
                return false;
            }
        }
    }
    true
}
