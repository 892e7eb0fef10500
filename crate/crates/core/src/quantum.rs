//! Detection model for a nonmaximal entangled photon pair measured by
//! single-channel polarization analyzers.
//!
//! The source state is (|HH⟩ + r|VV⟩)/√(1+r²) with the maximality factor
//! r ∈ [0, 1]; each side transmits through a linear analyzer at angle θ,
//! projecting on |θ⟩ = cos θ|H⟩ + sin θ|V⟩. Only transmission is detected
//! (single-channel analyzers), so a trial has four joint outcomes: both
//! detect, A only, B only, neither.

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("maximality factor r must be in [0, 1], got {0}")]
    InvalidMaximality(f64),
    #[error("angle must be finite, got {0}")]
    NonFiniteAngle(f64),
}

/// Nonmaximal two-photon state (|HH⟩ + r|VV⟩)/√(1+r²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntangledState {
    r: f64,
}

impl EntangledState {
    /// `r = 1` is the maximally entangled state, `r = 0` the product state
    /// |HH⟩.
    pub fn new(r: f64) -> Result<Self, ModelError> {
        if !r.is_finite() || !(0.0..=1.0).contains(&r) {
            return Err(ModelError::InvalidMaximality(r));
        }
        Ok(Self { r })
    }

    #[inline]
    pub fn r(self) -> f64 {
        self.r
    }
}

/// The four analyzer angles (radians): a1, a2 on side A and b1, b2 on side B.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleSet {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
}

impl AngleSet {
    pub fn new(a1: f64, a2: f64, b1: f64, b2: f64) -> Result<Self, ModelError> {
        for &x in &[a1, a2, b1, b2] {
            if !x.is_finite() {
                return Err(ModelError::NonFiniteAngle(x));
            }
        }
        Ok(Self { a1, a2, b1, b2 })
    }

    /// Analyzer settings are π-periodic; reduce every angle to [0, π).
    pub fn canonicalized(self) -> AngleSet {
        let wrap = |x: f64| {
            let y = x.rem_euclid(std::f64::consts::PI);
            // rem_euclid can return exactly π after rounding at the boundary
            if y >= std::f64::consts::PI {
                0.0
            } else {
                y
            }
        };
        AngleSet {
            a1: wrap(self.a1),
            a2: wrap(self.a2),
            b1: wrap(self.b1),
            b2: wrap(self.b2),
        }
    }

    /// The (α, β) pair selected by a setting combination.
    pub fn pair(&self, setting: crate::Setting) -> (f64, f64) {
        match setting {
            crate::Setting::A1B1 => (self.a1, self.b1),
            crate::Setting::A1B2 => (self.a1, self.b2),
            crate::Setting::A2B1 => (self.a2, self.b1),
            crate::Setting::A2B2 => (self.a2, self.b2),
        }
    }
}

/// Joint outcome probabilities for one (α, β) setting pair, before detector
/// efficiency and noise are applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointProbabilities {
    /// Both sides detect.
    pub p_cc: f64,
    /// Side A detects, side B does not.
    pub p_cn: f64,
    /// Side B detects, side A does not.
    pub p_nc: f64,
    /// Neither side detects.
    pub p_nn: f64,
}

impl JointProbabilities {
    pub fn sum(&self) -> f64 {
        self.p_cc + self.p_cn + self.p_nc + self.p_nn
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.p_cc, self.p_cn, self.p_nc, self.p_nn]
    }
}

/// Number of detections registered on each side in one trial.
///
/// Without noise the counts are at most 1 per side; the noise channel can add
/// one extra detection per side, so counts stay in {0, 1, 2}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialOutcome {
    pub detect_a: u8,
    pub detect_b: u8,
}

/// Joint detection probabilities for analyzers at α (side A) and β (side B).
///
/// Transmission amplitude is (cos α cos β + r sin α sin β)/√(1+r²); the
/// single-side transmission probability is (cos²θ + r² sin²θ)/(1+r²).
pub fn joint_detection_probabilities(
    state: EntangledState,
    alpha: f64,
    beta: f64,
) -> JointProbabilities {
    let r = state.r();
    let norm = 1.0 + r * r;
    let (sin_a, cos_a) = alpha.sin_cos();
    let (sin_b, cos_b) = beta.sin_cos();

    let amp = cos_a * cos_b + r * sin_a * sin_b;
    let p_cc = amp * amp / norm;
    let p_a = (cos_a * cos_a + r * r * sin_a * sin_a) / norm;
    let p_b = (cos_b * cos_b + r * r * sin_b * sin_b) / norm;

    // p_cc ≤ p_a and p_cc ≤ p_b by Cauchy-Schwarz; the max() only absorbs
    // float round-off.
    let p_cn = (p_a - p_cc).max(0.0);
    let p_nc = (p_b - p_cc).max(0.0);
    let p_nn = (1.0 - p_cc - p_cn - p_nc).max(0.0);

    JointProbabilities {
        p_cc,
        p_cn,
        p_nc,
        p_nn,
    }
}

/// Sample one trial: a categorical draw from `probs`, thinned by detector
/// efficiency, plus an independent extra detection per side with probability
/// `noise`.
pub fn sample_trial<R: Rng + ?Sized>(
    probs: &JointProbabilities,
    efficiency: f64,
    noise: f64,
    rng: &mut R,
) -> TrialOutcome {
    debug_assert!((0.0..=1.0).contains(&efficiency));
    debug_assert!((0.0..=1.0).contains(&noise));

    let u: f64 = rng.random();
    let (ideal_a, ideal_b) = if u < probs.p_cc {
        (true, true)
    } else if u < probs.p_cc + probs.p_cn {
        (true, false)
    } else if u < probs.p_cc + probs.p_cn + probs.p_nc {
        (false, true)
    } else {
        (false, false)
    };

    // Losses are independent per photon, not per pair: correlated losses
    // would merely shorten the run, independent losses change the metrics.
    let mut survive = |ideal: bool| -> u8 {
        u8::from(ideal && (efficiency >= 1.0 || rng.random_bool(efficiency)))
    };
    let mut detect_a = survive(ideal_a);
    let mut detect_b = survive(ideal_b);

    if noise > 0.0 {
        detect_a += u8::from(rng.random_bool(noise));
        detect_b += u8::from(rng.random_bool(noise));
    }

    TrialOutcome { detect_a, detect_b }
}
