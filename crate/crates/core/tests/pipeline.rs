//! End-to-end pipeline checks on synthetic event streams: losslessness,
//! counting identities, partition concatenation, linear-time scaling, delay
//! recovery, and the accidental-slope behavior.

use bellkit::analysis::{
    self, assign_windows, partition_analysis, scan_delays, whole_dataset_table, AnalysisParams,
    CountingMode, DelaySet, ScanObjective,
};
use bellkit::ch::CountTable;
use bellkit::ingest::{self, EventKind, RawEvent};
use bellkit::quantum::{joint_detection_probabilities, AngleSet, EntangledState};
use bellkit::seeds;
use bellkit::sim::{emit_synthetic_events, SimConfig, SynthTiming, TICKS_PER_US};
use bellkit::{Setting, Side};
use rand::Rng;

fn synth_config(seed: u64, trials_per_setting: u64, efficiency: f64, noise: f64) -> SimConfig {
    SimConfig {
        state: EntangledState::new(1.0).unwrap(),
        angles: AngleSet::new(0.0, 0.0, 0.0, 0.0).unwrap(),
        efficiency,
        noise,
        partition_size: trials_per_setting,
        runs: 1,
        averaging: false,
        seed,
    }
}

fn synth_events(config: &SimConfig, timing: &SynthTiming) -> Vec<RawEvent> {
    let mut buf = Vec::new();
    emit_synthetic_events(config, timing, &mut buf).unwrap();
    ingest::parse_events(buf.as_slice()).unwrap()
}

fn params(window: f64) -> AnalysisParams {
    AnalysisParams {
        window,
        ..AnalysisParams::default()
    }
}

#[test]
fn compile_is_lossless() {
    let config = synth_config(21, 3000, 0.8, 0.002);
    let events = synth_events(&config, &SynthTiming::default());
    let file = ingest::compile(&events).unwrap();

    let raw_detections: Vec<&RawEvent> = events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Detection(_)))
        .collect();
    let raw_openings = events
        .iter()
        .filter(|e| e.kind == EventKind::Opening)
        .count();

    // every detection survives with exact time conversion, openings are
    // counted per setting
    assert_eq!(file.num_detection_events(), raw_detections.len());
    for (raw, compiled) in raw_detections.iter().zip(&file.events) {
        assert_eq!(compiled.raw_time, ingest::tag_to_ps(raw.timetag));
        assert_eq!(compiled.setting, raw.setting);
    }
    assert_eq!(
        file.total_trials.iter().map(|&t| t as usize).sum::<usize>(),
        raw_openings
    );
    for s in Setting::ALL {
        let per_setting = events
            .iter()
            .filter(|e| e.kind == EventKind::Opening && e.setting == s)
            .count();
        assert_eq!(file.total_trials[s.index()] as usize, per_setting);
    }

    // compiled events ascend in raw time, cumulative counters never pass the
    // totals, and the opening precedes the detection it is attached to
    assert!(file
        .events
        .windows(2)
        .all(|w| w[0].raw_time <= w[1].raw_time));
    for ev in &file.events {
        assert!(ev.pockels_time <= ev.raw_time);
        for s in 0..4 {
            assert!(ev.trials[s] <= file.total_trials[s]);
        }
    }
}

#[test]
fn no_event_is_silently_lost_in_analysis() {
    let config = synth_config(22, 4000, 0.7, 0.004);
    let events = synth_events(&config, &SynthTiming::default());
    let file = ingest::compile(&events).unwrap();

    // shift the delays so part of the stream falls out of window
    let p = AnalysisParams {
        delays: DelaySet::new(0.7, 0.0),
        ..params(1.5)
    };
    let assignment = assign_windows(&file, &p).unwrap();
    assert_eq!(
        assignment.in_window_detections() + assignment.dropped,
        file.num_detection_events() as u64
    );
    assert!(assignment.dropped > 0);
}

#[test]
fn partitions_sum_to_whole_dataset_table() {
    let config = synth_config(23, 2500, 0.75, 0.003);
    let events = synth_events(&config, &SynthTiming::default());
    let file = ingest::compile(&events).unwrap();

    for mode in [CountingMode::Full, CountingMode::Legacy] {
        let p = AnalysisParams {
            partition_size: 97, // deliberately not a divisor of the stream
            counting_mode: mode,
            ..params(2.0)
        };
        let analysis = partition_analysis(&file, &p).unwrap();
        let mut sum = CountTable::default();
        for outcome in &analysis.partitions {
            sum.add(&outcome.table);
        }
        let whole = whole_dataset_table(&file, &p).unwrap();
        assert_eq!(sum, whole);
    }
}

#[test]
fn full_and_legacy_agree_on_clean_streams() {
    // no noise: at most one detection per side per trial
    let config = synth_config(24, 3000, 0.9, 0.0);
    let events = synth_events(&config, &SynthTiming::default());
    let file = ingest::compile(&events).unwrap();

    let full = whole_dataset_table(
        &file,
        &AnalysisParams {
            counting_mode: CountingMode::Full,
            ..params(2.0)
        },
    )
    .unwrap();
    let legacy = whole_dataset_table(
        &file,
        &AnalysisParams {
            counting_mode: CountingMode::Legacy,
            ..params(2.0)
        },
    )
    .unwrap();
    assert_eq!(full, legacy);
}

#[test]
fn end_to_end_recovers_joint_probabilities() {
    // eff = 1, no noise, maximal state, aligned analyzers: C/N estimates
    // p_cc = 1/2 at every setting
    let trials = 8000u64;
    let config = synth_config(25, trials, 1.0, 0.0);
    let events = synth_events(&config, &SynthTiming::default());
    let file = ingest::compile(&events).unwrap();
    let table = whole_dataset_table(&file, &params(2.0)).unwrap();

    for s in Setting::ALL {
        let (alpha, beta) = config.angles.pair(s);
        let p_cc = joint_detection_probabilities(config.state, alpha, beta).p_cc;
        let n = table.trials[s.index()] as f64;
        let rate = table.coincidences[s.index()] as f64 / n;
        let sigma = (p_cc * (1.0 - p_cc) / n).sqrt();
        assert!(
            (rate - p_cc).abs() < 3.0 * sigma,
            "setting {s}: rate {rate} vs p_cc {p_cc} (sigma {sigma})"
        );
    }
}

#[test]
fn touch_count_scales_linearly() {
    let sizes = [1500u64, 3000, 6000, 12000, 24000];
    let mut points = Vec::new();
    for (i, &trials) in sizes.iter().enumerate() {
        let config = synth_config(26 + i as u64, trials, 0.8, 0.003);
        let events = synth_events(&config, &SynthTiming::default());
        let file = ingest::compile(&events).unwrap();
        let assignment = assign_windows(&file, &params(2.0)).unwrap();
        points.push((
            file.num_detection_events() as f64,
            assignment.touches as f64,
        ));
    }

    // least-squares fit touches = a + b * events; demand R^2 > 0.99
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let r2 = sxy * sxy / (sxx * syy);
    assert!(r2 > 0.99, "R^2 = {r2}, points {points:?}");
}

/// Build a stream with per-side detections at hand-chosen offsets so delay
/// arithmetic stays away from window boundaries.
fn stream_with_injected_delays(
    seed: u64,
    trials: u64,
    inject_1_ticks: u64,
    inject_2_ticks: u64,
) -> Vec<RawEvent> {
    let timing = SynthTiming::default();
    let mut rng = seeds::stream(seed, &[0]);
    let mut events = Vec::new();
    for trial in 0..trials {
        let setting = Setting::ALL[(trial % 4) as usize];
        let open = trial * timing.period_ticks;
        events.push(RawEvent {
            timetag: open,
            setting,
            kind: EventKind::Opening,
        });
        // one detection per side per trial, uniform inside the window but
        // away from the exact edge
        let off1: u64 = rng.random_range(1..timing.window_ticks);
        let off2: u64 = rng.random_range(1..timing.window_ticks);
        events.push(RawEvent {
            timetag: open + off1 + inject_1_ticks,
            setting,
            kind: EventKind::Detection(Side::One),
        });
        events.push(RawEvent {
            timetag: open + off2 + inject_2_ticks,
            setting,
            kind: EventKind::Detection(Side::Two),
        });
    }
    events.sort_by_key(|e| e.timetag);
    events
}

#[test]
fn delay_scan_recovers_injected_delays() {
    let inject_1 = TICKS_PER_US; // 1.0 us
    let inject_2 = TICKS_PER_US * 3 / 5; // 0.6 us
    let events = stream_with_injected_delays(31, 1600, inject_1, inject_2);
    let file = ingest::compile(&events).unwrap();

    let grid: Vec<f64> = (0..11).map(|k| k as f64 * 0.2).collect();
    let scan = scan_delays(
        &file,
        &params(2.0),
        &grid,
        &grid,
        ScanObjective::Coincidences,
    )
    .unwrap();
    assert!(
        (scan.best.delay_1 - 1.0).abs() < 0.2001,
        "recovered delay_1 = {}",
        scan.best.delay_1
    );
    assert!(
        (scan.best.delay_2 - 0.6).abs() < 0.2001,
        "recovered delay_2 = {}",
        scan.best.delay_2
    );
}

#[test]
fn delay_surface_translates_with_a_common_shift() {
    let step_ticks = TICKS_PER_US / 5; // 0.2 us, one grid step
    let base = stream_with_injected_delays(32, 1200, 0, 0);
    let shifted: Vec<RawEvent> = base
        .iter()
        .map(|e| match e.kind {
            EventKind::Opening => *e,
            EventKind::Detection(_) => RawEvent {
                timetag: e.timetag + step_ticks,
                ..*e
            },
        })
        .collect();

    let grid: Vec<f64> = (0..8).map(|k| k as f64 * 0.2).collect();
    let scan_base = scan_delays(
        &ingest::compile(&base).unwrap(),
        &params(2.0),
        &grid,
        &grid,
        ScanObjective::Coincidences,
    )
    .unwrap();
    let scan_shifted = scan_delays(
        &ingest::compile(&shifted).unwrap(),
        &params(2.0),
        &grid,
        &grid,
        ScanObjective::Coincidences,
    )
    .unwrap();

    // value at (d1 + 0.2, d2 + 0.2) on the shifted data equals the value at
    // (d1, d2) on the original data
    let m = grid.len();
    for i in 0..m - 1 {
        for j in 0..m - 1 {
            let orig = scan_base.surface[i * m + j].2;
            let moved = scan_shifted.surface[(i + 1) * m + (j + 1)].2;
            assert_eq!(orig, moved, "mismatch at grid ({i}, {j})");
        }
    }
}

#[test]
fn histogram_matches_poisson_source() {
    // side 1 draws Poisson(lambda) detections per trial, side 2 always one;
    // the side-1 histogram over trials must match the Poisson pmf
    let lambda = 0.8f64;
    let trials = 40_000u64;
    let timing = SynthTiming::default();
    let mut rng = seeds::stream(33, &[0]);
    let mut events = Vec::new();
    for trial in 0..trials {
        let setting = Setting::ALL[(trial % 4) as usize];
        let open = trial * timing.period_ticks;
        events.push(RawEvent {
            timetag: open,
            setting,
            kind: EventKind::Opening,
        });
        let mut k = 0u32;
        let mut p: f64 = 1.0;
        let limit = (-lambda).exp();
        loop {
            p *= rng.random::<f64>();
            if p <= limit {
                break;
            }
            k += 1;
        }
        for _ in 0..k {
            events.push(RawEvent {
                timetag: open + rng.random_range(1..timing.window_ticks),
                setting,
                kind: EventKind::Detection(Side::One),
            });
        }
        events.push(RawEvent {
            timetag: open + rng.random_range(1..timing.window_ticks),
            setting,
            kind: EventKind::Detection(Side::Two),
        });
    }
    events.sort_by_key(|e| e.timetag);
    let file = ingest::compile(&events).unwrap();

    let hist = analysis::histogram_per_trial(&file, &params(2.0), Side::One).unwrap();
    assert_eq!(hist.values().sum::<u64>(), trials);

    // side 2 is a single-detection stream: its histogram is exactly {1: T}
    let hist_2 = analysis::histogram_per_trial(&file, &params(2.0), Side::Two).unwrap();
    assert_eq!(hist_2.len(), 1);
    assert_eq!(hist_2.get(&1), Some(&trials));

    let mut pmf = 1.0 * (-lambda).exp(); // k = 0
    for k in 0..6u32 {
        let expected = trials as f64 * pmf;
        if expected >= 25.0 {
            let observed = *hist.get(&k).unwrap_or(&0) as f64;
            let sigma = (expected * (1.0 - pmf)).sqrt();
            assert!(
                (observed - expected).abs() < 3.0 * sigma,
                "k={k}: observed {observed}, expected {expected}, sigma {sigma}"
            );
        }
        pmf *= lambda / (k + 1) as f64;
    }
}

#[test]
fn accidental_slope_scales_with_rate_squared() {
    // pure accidentals: efficiency 0, independent noise detections per side.
    // the late-window slope of C(W) goes like the square of the rate.
    let slope = |noise: f64, seed: u64| -> f64 {
        let config = SimConfig {
            noise,
            ..synth_config(seed, 30_000, 0.0, noise)
        };
        let events = synth_events(&config, &SynthTiming::default());
        let file = ingest::compile(&events).unwrap();
        let grid: Vec<f64> = (1..=15).map(|k| k as f64 * 100.0).collect(); // ns
        let curve = bellkit::accidentals::scan_curve(
            &file,
            DelaySet::default(),
            &grid,
            2.0,
            40.0,
            500.0,
            0.01,
        )
        .unwrap();
        // aggregate C over settings at 0.4 us and 1.2 us
        let total = |i: usize| -> f64 { (0..4).map(|s| curve.counts[s][i] as f64).sum() };
        (total(11) - total(3)) / (grid[11] - grid[3])
    };

    let s1 = slope(0.2, 41);
    let s2 = slope(0.4, 42);
    assert!(s1 > 0.0);
    let ratio = s2 / s1;
    assert!(
        (3.0..5.0).contains(&ratio),
        "slope ratio {ratio}, expected about 4"
    );
}

#[test]
fn pure_pair_stream_has_negligible_accidentals_flag() {
    // certain pairs (product state, aligned analyzers), no noise: every
    // trial has exactly one detection per side, cross-trial matches are out
    // of reach, so C(W) saturates at the per-setting trial count once W
    // covers the window spread
    let config = SimConfig {
        state: EntangledState::new(0.0).unwrap(),
        ..synth_config(43, 20_000, 1.0, 0.0)
    };
    let events = synth_events(&config, &SynthTiming::default());
    let file = ingest::compile(&events).unwrap();
    let grid: Vec<f64> = (1..=24).map(|k| k as f64 * 100.0).collect();
    let curve = bellkit::accidentals::scan_curve(
        &file,
        DelaySet::default(),
        &grid,
        2.0,
        40.0,
        2000.0,
        0.05,
    )
    .unwrap();
    for s in 0..4 {
        let last = *curve.counts[s].last().unwrap();
        assert_eq!(last, 20_000);
    }
    assert!(curve.negligible);
}
