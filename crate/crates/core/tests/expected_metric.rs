//! Sampling-free validation of the search stack: maximize the exact
//! expected CH metric (a closed-form function of the angles) with the Powell
//! minimizer and pin the optima. This ties together the probability model,
//! the metric definition, and the optimizer with no Monte Carlo noise.

use bellkit::powell::{minimize, PowellParams};
use bellkit::quantum::{joint_detection_probabilities, EntangledState};
use bellkit::seeds;
use rand::Rng;

/// E[ch] for full counting without averaging at detector efficiency `eff`:
/// coincidence terms scale with eff², singles terms with eff.
fn expected_ch(state: EntangledState, eff: f64, a1: f64, x: &[f64]) -> f64 {
    let (a2, b1, b2) = (x[0], x[1], x[2]);
    let p_cc = |alpha: f64, beta: f64| joint_detection_probabilities(state, alpha, beta).p_cc;
    let marginal_a = |alpha: f64| {
        let p = joint_detection_probabilities(state, alpha, 0.0);
        p.p_cc + p.p_cn
    };
    let marginal_b = |beta: f64| {
        let p = joint_detection_probabilities(state, 0.0, beta);
        p.p_cc + p.p_nc
    };
    eff * eff * (p_cc(a1, b1) + p_cc(a1, b2) + p_cc(a2, b1) - p_cc(a2, b2))
        - eff * (marginal_a(a1) + marginal_b(b1))
}

fn maximize(state: EntangledState, eff: f64, a1: f64, restarts: u32) -> f64 {
    let params = PowellParams {
        ftol: 1e-12,
        line_xtol: 1e-7,
        ..PowellParams::default()
    };
    let mut rng = seeds::stream(0x0ACE, &[eff.to_bits()]);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..restarts {
        let start: Vec<f64> = (0..3)
            .map(|_| rng.random_range(0.0..std::f64::consts::PI))
            .collect();
        let res = minimize(|x| -expected_ch(state, eff, a1, x), &start, &params);
        best = best.max(-res.f);
    }
    best
}

#[test]
fn expected_metric_optimum_at_full_efficiency() {
    let state = EntangledState::new(0.26).unwrap();
    let best = maximize(state, 1.0, std::f64::consts::FRAC_PI_2, 40);
    assert!(
        (best - 0.056157).abs() < 2e-5,
        "max expected CH at eff 1.0 = {best}"
    );
}

#[test]
fn expected_metric_optimum_at_threshold_efficiency() {
    // a violation exists at 75% efficiency for r = 0.26, but only just
    let state = EntangledState::new(0.26).unwrap();
    let best = maximize(state, 0.75, std::f64::consts::FRAC_PI_2, 40);
    assert!(best > 0.0);
    assert!(
        (best - 0.004028).abs() < 2e-5,
        "max expected CH at eff 0.75 = {best}"
    );
}

#[test]
fn no_violation_below_threshold_efficiency() {
    let state = EntangledState::new(0.26).unwrap();
    let best = maximize(state, 0.65, std::f64::consts::FRAC_PI_2, 40);
    assert!(best < 0.0, "max expected CH at eff 0.65 = {best}");
    assert!((best - (-0.008690)).abs() < 2e-5);
}

#[test]
fn pinning_to_the_dominant_axis_forbids_violation() {
    // with a1 on the high-transmission axis the singles term is too large
    // for any violation at 75% efficiency
    let state = EntangledState::new(0.26).unwrap();
    let best = maximize(state, 0.75, 0.0, 40);
    assert!(best < 0.0, "max expected CH pinned at 0 rad = {best}");
}
