//! Monte Carlo EPRB experiments on the quantum model: batch runs with CH
//! metrics, Powell search of the angle space, and a synthetic event-stream
//! emitter that feeds the ingest pipeline for end-to-end checks.

use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::ch::{self, ChResult, CountTable};
use crate::powell::{self, PowellParams};
use crate::quantum::{self, AngleSet, EntangledState, JointProbabilities};
use crate::seeds;
use crate::Setting;

// Seed-path tags keeping the simulator's independent random streams apart.
const TAG_RUN: u64 = 1;
const TAG_START: u64 = 2;
const TAG_REPLICATE: u64 = 3;
const TAG_SYNTH: u64 = 4;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("probability parameter {name} must be in [0, 1], got {value}")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("{name} must be at least 1")]
    ZeroCount { name: &'static str },
}

/// Full configuration of one simulated experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub state: EntangledState,
    pub angles: AngleSet,
    pub efficiency: f64,
    pub noise: f64,
    /// Trials drawn per setting combination per run.
    pub partition_size: u64,
    /// Independent runs (partitions) per experiment.
    pub runs: u64,
    pub averaging: bool,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, value) in [("efficiency", self.efficiency), ("noise", self.noise)] {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(SimError::InvalidProbability { name, value });
            }
        }
        if self.partition_size == 0 {
            return Err(SimError::ZeroCount {
                name: "partition_size",
            });
        }
        if self.runs == 0 {
            return Err(SimError::ZeroCount { name: "runs" });
        }
        Ok(())
    }
}

/// Aggregate prediction over the runs of one experiment (or, for the angle
/// search, over its replicate re-evaluations).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionResult {
    pub mean_ch: f64,
    pub mean_ratio: f64,
    /// Fraction of runs with ch > 0.
    pub positivity: f64,
    pub angles: AngleSet,
    /// Number of (runs × partition_size) evaluations averaged.
    pub replicates: u32,
}

fn setting_probabilities(state: EntangledState, angles: &AngleSet) -> [JointProbabilities; 4] {
    Setting::ALL.map(|s| {
        let (alpha, beta) = angles.pair(s);
        quantum::joint_detection_probabilities(state, alpha, beta)
    })
}

fn simulate_partition<R: Rng + ?Sized>(
    probs: &[JointProbabilities; 4],
    efficiency: f64,
    noise: f64,
    partition_size: u64,
    rng: &mut R,
) -> CountTable {
    let mut table = CountTable::default();
    for s in Setting::ALL {
        let i = s.index();
        let p = &probs[i];
        let mut singles_a = 0u64;
        let mut singles_b = 0u64;
        let mut coincidences = 0u64;
        for _ in 0..partition_size {
            let t = quantum::sample_trial(p, efficiency, noise, rng);
            singles_a += t.detect_a as u64;
            singles_b += t.detect_b as u64;
            coincidences += t.detect_a.min(t.detect_b) as u64;
        }
        table.singles_a[i] = singles_a;
        table.singles_b[i] = singles_b;
        table.coincidences[i] = coincidences;
        table.trials[i] = partition_size;
    }
    table
}

/// Run `config.runs` independent partitions and report the mean CH metrics
/// and the positivity across them.
///
/// Runs are evaluated on independent derived streams, so the result is
/// identical for a given seed regardless of how the work is scheduled.
pub fn run_experiment(config: &SimConfig) -> Result<PredictionResult, SimError> {
    config.validate()?;
    let probs = setting_probabilities(config.state, &config.angles);

    let results: Vec<ChResult> = (0..config.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = seeds::stream(config.seed, &[TAG_RUN, run]);
            let table = simulate_partition(
                &probs,
                config.efficiency,
                config.noise,
                config.partition_size,
                &mut rng,
            );
            // partition_size >= 1, so the table is always sufficient
            ch::ch_linear(&table, config.averaging).expect("simulated table sufficient")
        })
        .collect();

    Ok(summarize(&results, config.angles, 1))
}

fn summarize(results: &[ChResult], angles: AngleSet, replicates: u32) -> PredictionResult {
    let n = results.len() as f64;
    let mean_ch = results.iter().map(|r| r.ch_linear).sum::<f64>() / n;
    let ratios: Vec<f64> = results
        .iter()
        .map(|r| r.ch_ratio)
        .filter(|x| x.is_finite())
        .collect();
    let mean_ratio = if ratios.is_empty() {
        f64::NAN
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    let positive = results.iter().filter(|r| r.violated).count() as f64;

    PredictionResult {
        mean_ch,
        mean_ratio,
        positivity: positive / n,
        angles,
        replicates,
    }
}

/// Search the angle space for the maximal mean CH metric.
///
/// The first side-A angle is pinned to the source state's minimal
/// transmission axis (π/2 for the HH-dominant state), which removes the
/// gauge freedom of the angle space; the search then runs over (a2, b1, b2)
/// from `restarts` random starting points. Every objective evaluation inside
/// one restart reuses the same derived seed, making the objective a
/// deterministic function of the angles; each time a restart beats the best
/// value seen so far, the candidate is re-evaluated as the mean of ten
/// independently seeded (runs × partition_size) replicates and that average
/// is what gets reported.
#[allow(clippy::too_many_arguments)]
pub fn powell_search(
    state: EntangledState,
    efficiency: f64,
    noise: f64,
    partition_size: u64,
    runs: u64,
    averaging: bool,
    restarts: u32,
    seed: u64,
) -> Result<PredictionResult, SimError> {
    if restarts == 0 {
        return Err(SimError::ZeroCount { name: "restarts" });
    }
    // Pinning the first angle to the minimal-transmission axis removes the
    // gauge freedom without excluding the low-efficiency optima, which sit
    // near that axis.
    let pinned_a1 = std::f64::consts::FRAC_PI_2;
    let base = SimConfig {
        state,
        angles: AngleSet {
            a1: pinned_a1,
            a2: 0.0,
            b1: 0.0,
            b2: 0.0,
        },
        efficiency,
        noise,
        partition_size,
        runs,
        averaging,
        seed,
    };
    base.validate()?;

    let powell_params = PowellParams::default();
    let mut best_search_value = f64::NEG_INFINITY;
    let mut best_report: Option<PredictionResult> = None;

    for restart in 0..restarts {
        let mut start_rng = seeds::stream(seed, &[TAG_START, restart as u64]);
        let start: Vec<f64> = (0..3)
            .map(|_| start_rng.random_range(0.0..std::f64::consts::PI))
            .collect();

        let eval_seed = seeds::derive(seed, &[TAG_RUN, restart as u64]);
        let objective = |x: &[f64]| -> f64 {
            let config = SimConfig {
                angles: AngleSet {
                    a1: pinned_a1,
                    a2: x[0],
                    b1: x[1],
                    b2: x[2],
                },
                seed: eval_seed,
                ..base
            };
            -run_experiment(&config).expect("validated config").mean_ch
        };

        let result = powell::minimize(objective, &start, &powell_params);
        let search_value = -result.f;

        if search_value > best_search_value {
            best_search_value = search_value;
            let angles = AngleSet {
                a1: pinned_a1,
                a2: result.x[0],
                b1: result.x[1],
                b2: result.x[2],
            }
            .canonicalized();
            best_report = Some(replicate_evaluation(&base, angles, restart, 10)?);
        }
    }

    Ok(best_report.expect("at least one restart"))
}

fn replicate_evaluation(
    base: &SimConfig,
    angles: AngleSet,
    restart: u32,
    replicates: u32,
) -> Result<PredictionResult, SimError> {
    let probs = setting_probabilities(base.state, &angles);
    let per_run: Vec<ChResult> = (0..replicates as u64 * base.runs)
        .into_par_iter()
        .map(|task| {
            let (rep, run) = (task / base.runs, task % base.runs);
            let mut rng = seeds::stream(base.seed, &[TAG_REPLICATE, restart as u64, rep, run]);
            let table = simulate_partition(
                &probs,
                base.efficiency,
                base.noise,
                base.partition_size,
                &mut rng,
            );
            ch::ch_linear(&table, base.averaging).expect("simulated table sufficient")
        })
        .collect();

    Ok(summarize(&per_run, angles, replicates))
}

/// Timing layout of a synthetic event stream, in the raw 156.25 ps tag unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthTiming {
    /// Gap between consecutive Pockels cell openings.
    pub period_ticks: u64,
    /// Length of the detection window after each opening.
    pub window_ticks: u64,
    /// Tag of the first opening.
    pub start_tag: u64,
    /// Draw the setting of each trial at random instead of cycling.
    pub random_settings: bool,
}

/// 1 μs = 6400 tag units of 156.25 ps.
pub const TICKS_PER_US: u64 = 6400;

impl Default for SynthTiming {
    fn default() -> Self {
        // 2 μs openings every 40 μs
        SynthTiming {
            period_ticks: 40 * TICKS_PER_US,
            window_ticks: 2 * TICKS_PER_US,
            start_tag: 0,
            random_settings: false,
        }
    }
}

/// Emit a synthetic event text stream in the raw `timetag setting kind`
/// format: one opening line per trial plus a detection line per registered
/// detection, with detection tags uniform inside the opening window.
///
/// The stream contains `runs × partition_size` trials per setting and is
/// emitted in ascending tag order, ready for compilation.
pub fn emit_synthetic_events<W: Write>(
    config: &SimConfig,
    timing: &SynthTiming,
    out: &mut W,
) -> io::Result<()> {
    let probs = setting_probabilities(config.state, &config.angles);
    let total_openings = config
        .runs
        .checked_mul(config.partition_size)
        .and_then(|n| n.checked_mul(4))
        .expect("synthetic stream size overflows u64");
    let mut rng = seeds::stream(config.seed, &[TAG_SYNTH]);
    let mut lines: Vec<(u64, u32, u8)> = Vec::with_capacity(4);

    for trial in 0..total_openings {
        let setting = if timing.random_settings {
            Setting::ALL[rng.random_range(0..4usize)]
        } else {
            Setting::ALL[(trial % 4) as usize]
        };
        let open_tag = timing.start_tag + trial * timing.period_ticks;

        lines.clear();
        lines.push((open_tag, setting.code(), 15));
        let outcome = quantum::sample_trial(
            &probs[setting.index()],
            config.efficiency,
            config.noise,
            &mut rng,
        );
        for _ in 0..outcome.detect_a {
            let tag = open_tag + rng.random_range(0..timing.window_ticks);
            lines.push((tag, setting.code(), 1));
        }
        for _ in 0..outcome.detect_b {
            let tag = open_tag + rng.random_range(0..timing.window_ticks);
            lines.push((tag, setting.code(), 2));
        }
        // openings sort ahead of detections on tag ties so a zero-offset
        // detection still follows its own opening
        lines.sort_by_key(|&(tag, _, kind)| (tag, kind != 15, kind));
        for &(tag, code, kind) in &lines {
            writeln!(out, "{tag} {code} {kind}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(seed: u64) -> SimConfig {
        SimConfig {
            state: EntangledState::new(0.26).unwrap(),
            angles: AngleSet::new(0.0, 0.65, 0.3, 1.0).unwrap(),
            efficiency: 0.75,
            noise: 0.0,
            partition_size: 200,
            runs: 20,
            averaging: false,
            seed,
        }
    }

    #[test]
    fn identical_seed_identical_result() {
        let a = run_experiment(&config(42)).unwrap();
        let b = run_experiment(&config(42)).unwrap();
        assert_eq!(a, b);
        let c = run_experiment(&config(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        let mut c = config(1);
        c.efficiency = 1.5;
        assert!(matches!(
            run_experiment(&c),
            Err(SimError::InvalidProbability { .. })
        ));
        let mut c = config(1);
        c.runs = 0;
        assert!(matches!(
            run_experiment(&c),
            Err(SimError::ZeroCount { .. })
        ));
    }

    #[test]
    fn perfect_efficiency_aligned_maximal_state_counts() {
        // p_cc = 1/2 at every setting; with eff = 1 and no noise the
        // coincidence rate estimates it directly.
        let c = SimConfig {
            state: EntangledState::new(1.0).unwrap(),
            angles: AngleSet::new(0.0, 0.0, 0.0, 0.0).unwrap(),
            efficiency: 1.0,
            noise: 0.0,
            partition_size: 20_000,
            runs: 1,
            averaging: false,
            seed: 7,
        };
        let probs = setting_probabilities(c.state, &c.angles);
        let mut rng = seeds::stream(c.seed, &[TAG_RUN, 0]);
        let table = simulate_partition(&probs, 1.0, 0.0, c.partition_size, &mut rng);
        for s in Setting::ALL {
            let rate = table.coincidences[s.index()] as f64 / c.partition_size as f64;
            assert!((rate - 0.5).abs() < 0.02, "rate = {rate}");
            assert_eq!(table.singles_a[s.index()], table.coincidences[s.index()]);
        }
    }

    #[test]
    fn mean_ch_increases_with_efficiency() {
        // near-threshold angle set; the coincidence terms grow like eff^2
        // against singles terms growing like eff, so the metric climbs
        // through zero as the efficiency rises
        let angles = AngleSet::new(std::f64::consts::FRAC_PI_2, 2.1903, 1.6890, 1.2739).unwrap();
        let means: Vec<f64> = (0..8)
            .map(|k| {
                let c = SimConfig {
                    state: EntangledState::new(0.26).unwrap(),
                    angles,
                    efficiency: 0.65 + 0.05 * k as f64,
                    noise: 0.0,
                    partition_size: 2000,
                    runs: 100,
                    averaging: false,
                    seed: 1234,
                };
                run_experiment(&c).unwrap().mean_ch
            })
            .collect();
        assert!(
            means.windows(2).all(|w| w[0] < w[1]),
            "means not increasing: {means:?}"
        );
        assert!(means[0] < 0.0);
        assert!(means[7] > 0.0);
    }

    #[test]
    fn search_with_single_restart_is_deterministic() {
        let state = EntangledState::new(0.26).unwrap();
        let a = powell_search(state, 1.0, 0.0, 100, 10, false, 1, 5).unwrap();
        let b = powell_search(state, 1.0, 0.0, 100, 10, false, 1, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.replicates, 10);
        let canon = a.angles;
        for x in [canon.a1, canon.a2, canon.b1, canon.b2] {
            assert!((0.0..std::f64::consts::PI).contains(&x));
        }
        assert_eq!(canon.a1, std::f64::consts::FRAC_PI_2);
    }

    #[test]
    fn synthetic_stream_shape_and_window() {
        // Product state |HH> with aligned analyzers and perfect detection:
        // every trial yields one opening line plus one detection per side,
        // all inside the window.
        let c = SimConfig {
            state: EntangledState::new(0.0).unwrap(),
            angles: AngleSet::new(0.0, 0.0, 0.0, 0.0).unwrap(),
            efficiency: 1.0,
            noise: 0.0,
            partition_size: 10,
            runs: 1,
            averaging: false,
            seed: 11,
        };
        let timing = SynthTiming::default();
        let mut buf = Vec::new();
        emit_synthetic_events(&c, &timing, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();

        // product state |HH>, aligned analyzers: both sides always detect
        let openings = lines.iter().filter(|l| l.ends_with(" 15")).count();
        let side1 = lines.iter().filter(|l| l.ends_with(" 1")).count();
        let side2 = lines.iter().filter(|l| l.ends_with(" 2")).count();
        assert_eq!(openings, 40);
        assert_eq!(side1, 40);
        assert_eq!(side2, 40);

        let mut last_tag = 0u64;
        let mut current_open = None;
        for line in &lines {
            let mut parts = line.split_whitespace();
            let tag: u64 = parts.next().unwrap().parse().unwrap();
            let _code: u32 = parts.next().unwrap().parse().unwrap();
            let kind: u32 = parts.next().unwrap().parse().unwrap();
            assert!(tag >= last_tag, "stream must be sorted");
            last_tag = tag;
            if kind == 15 {
                current_open = Some(tag);
            } else {
                let open = current_open.expect("detection before opening");
                assert!(tag >= open && tag < open + timing.window_ticks);
            }
        }
    }

    #[test]
    fn line_searches_never_accept_a_worse_point() {
        // the sampled objective with a fixed seed is a deterministic
        // function of the angles, so the minimizer's guarantee applies to
        // it directly
        let base = config(9);
        let objective = |x: &[f64]| -> f64 {
            let c = SimConfig {
                angles: AngleSet {
                    a1: std::f64::consts::FRAC_PI_2,
                    a2: x[0],
                    b1: x[1],
                    b2: x[2],
                },
                ..base
            };
            -run_experiment(&c).unwrap().mean_ch
        };
        let mut rng = seeds::stream(17, &[0]);
        for _ in 0..3 {
            let start: Vec<f64> = (0..3)
                .map(|_| rng.random_range(0.0..std::f64::consts::PI))
                .collect();
            let f_start = objective(&start);
            let res =
                crate::powell::minimize(objective, &start, &crate::powell::PowellParams::default());
            assert!(res.f <= f_start);
        }
    }

    #[test]
    fn empty_config_emits_empty_stream() {
        let mut c = config(1);
        c.runs = 0; // bypasses validate(): emission is plumbing, not simulation
        let mut buf = Vec::new();
        emit_synthetic_events(&c, &SynthTiming::default(), &mut buf).unwrap();
        assert!(buf.is_empty());
    }
}
