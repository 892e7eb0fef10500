//! The streaming O(T) analysis engine: delay correction, window assignment,
//! both counting modes, per-trial histograms, partitioned CH analysis, and
//! delay/window parameter scans.
//!
//! Everything runs over an immutable [`CompiledFile`] in a single forward
//! pass per evaluation; each detection is touched a bounded constant number
//! of times.

use rayon::prelude::*;
use thiserror::Error;

use crate::ch::{self, ChResult, CountTable, PositivityReport};
use crate::ingest::CompiledFile;
use crate::{Setting, Side};

const PS_PER_US: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("window must be positive, got {0} us")]
    NonPositiveWindow(f64),
    #[error("window {window} us overlaps adjacent trials (period {period} us, limit period/2)")]
    WindowTooLarge { window: f64, period: f64 },
    #[error("opening period must be positive, got {0} us")]
    NonPositivePeriod(f64),
    #[error("delays must be finite")]
    NonFiniteDelay,
    #[error("partition size must be at least 1")]
    ZeroPartitionSize,
}

/// Time-of-flight corrections, subtracted from detection times
/// (corrected = raw − delay), in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DelaySet {
    pub delay_1: f64,
    pub delay_2: f64,
}

impl DelaySet {
    pub fn new(delay_1: f64, delay_2: f64) -> DelaySet {
        DelaySet { delay_1, delay_2 }
    }

    pub fn for_side(&self, side: Side) -> f64 {
        match side {
            Side::One => self.delay_1,
            Side::Two => self.delay_2,
        }
    }
}

/// Counting semantics for detections inside one trial window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountingMode {
    /// Count every in-window detection; coincidences are min(n1, n2).
    Full,
    /// At most one detection per side per trial is registered.
    Legacy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisParams {
    /// Window size after each opening, microseconds.
    pub window: f64,
    pub delays: DelaySet,
    /// Detection events per partition.
    pub partition_size: usize,
    pub averaging: bool,
    pub counting_mode: CountingMode,
    /// Opening cycle period used for the previous-cycle re-test,
    /// microseconds.
    pub period: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            window: 2.5,
            delays: DelaySet::default(),
            partition_size: 10_000,
            averaging: false,
            counting_mode: CountingMode::Full,
            period: 40.0,
        }
    }
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !self.period.is_finite() || self.period <= 0.0 {
            return Err(AnalysisError::NonPositivePeriod(self.period));
        }
        if !self.window.is_finite() || self.window <= 0.0 {
            return Err(AnalysisError::NonPositiveWindow(self.window));
        }
        if self.window > self.period / 2.0 {
            return Err(AnalysisError::WindowTooLarge {
                window: self.window,
                period: self.period,
            });
        }
        if !self.delays.delay_1.is_finite() || !self.delays.delay_2.is_finite() {
            return Err(AnalysisError::NonFiniteDelay);
        }
        if self.partition_size == 0 {
            return Err(AnalysisError::ZeroPartitionSize);
        }
        Ok(())
    }
}

/// In-window detection counts for one opening of one setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialBucket {
    pub setting: Setting,
    /// 1-based opening index within the setting.
    pub ordinal: u64,
    pub n1: u32,
    pub n2: u32,
    /// Index of the first in-window event of this trial in the compiled
    /// stream; decides which partition the trial belongs to.
    pub first_event: usize,
}

/// Result of the bucketing pass.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowAssignment {
    pub buckets: Vec<TrialBucket>,
    /// Detections outside any window (noise diagnostics, never a metric
    /// input).
    pub dropped: u64,
    /// Event-touch counter; grows linearly with the stream length.
    pub touches: u64,
}

impl WindowAssignment {
    pub fn in_window_detections(&self) -> u64 {
        self.buckets.iter().map(|b| (b.n1 + b.n2) as u64).sum()
    }
}

struct OpenTrial {
    ordinal: u64,
    n1: u32,
    n2: u32,
    first_event: usize,
}

/// Single forward pass: correct each detection for its side's delay, test it
/// against its recorded opening window and, when the corrected time falls
/// before the recorded opening, against the previous cycle, and group the
/// survivors into per-trial buckets.
pub fn assign_windows(
    file: &CompiledFile,
    params: &AnalysisParams,
) -> Result<WindowAssignment, AnalysisError> {
    params.validate()?;
    let window_ps = params.window * PS_PER_US;
    let period_ps = params.period * PS_PER_US;

    let mut open: [Vec<OpenTrial>; 4] = Default::default();
    let mut buckets = Vec::new();
    let mut dropped = 0u64;
    let mut touches = 0u64;

    for (index, ev) in file.events.iter().enumerate() {
        touches += 1;
        let s = ev.setting.index();
        let recorded = ev.trials[s] as u64;

        // Openings more than one cycle behind can no longer receive events:
        // emit their buckets now, in ordinal order.
        let keep_from = recorded.saturating_sub(1);
        while open[s].first().is_some_and(|t| t.ordinal < keep_from) {
            let t = open[s].remove(0);
            touches += 1;
            buckets.push(TrialBucket {
                setting: ev.setting,
                ordinal: t.ordinal,
                n1: t.n1,
                n2: t.n2,
                first_event: t.first_event,
            });
        }

        if ev.pockels_time == f64::NEG_INFINITY || recorded == 0 {
            dropped += 1;
            continue;
        }

        let corrected = ev.raw_time - params.delays.for_side(ev.channel) * PS_PER_US;
        let ordinal = if corrected >= ev.pockels_time {
            if corrected < ev.pockels_time + window_ps {
                Some(recorded)
            } else {
                None
            }
        } else {
            // The delay correction can move a detection into the previous
            // opening cycle.
            let prev = ev.pockels_time - period_ps;
            if corrected >= prev && corrected < prev + window_ps && recorded >= 2 {
                Some(recorded - 1)
            } else {
                None
            }
        };

        let Some(ordinal) = ordinal else {
            dropped += 1;
            continue;
        };

        match open[s].iter_mut().find(|t| t.ordinal == ordinal) {
            Some(t) => match ev.channel {
                Side::One => t.n1 += 1,
                Side::Two => t.n2 += 1,
            },
            None => {
                let (n1, n2) = match ev.channel {
                    Side::One => (1, 0),
                    Side::Two => (0, 1),
                };
                let pos = open[s].partition_point(|t| t.ordinal < ordinal);
                open[s].insert(
                    pos,
                    OpenTrial {
                        ordinal,
                        n1,
                        n2,
                        first_event: index,
                    },
                );
            }
        }
    }

    for (s, list) in open.iter_mut().enumerate() {
        for t in list.drain(..) {
            buckets.push(TrialBucket {
                setting: Setting::from_index(s).unwrap(),
                ordinal: t.ordinal,
                n1: t.n1,
                n2: t.n2,
                first_event: t.first_event,
            });
        }
    }

    Ok(WindowAssignment {
        buckets,
        dropped,
        touches,
    })
}

/// Full counting: every in-window detection contributes to the singles, and
/// each trial contributes min(n1, n2) coincidences. Nothing is excluded.
pub fn count_full<'a, I>(buckets: I, trials: [u64; 4]) -> CountTable
where
    I: IntoIterator<Item = &'a TrialBucket>,
{
    let mut table = CountTable {
        trials,
        ..CountTable::default()
    };
    for b in buckets {
        let i = b.setting.index();
        table.singles_a[i] += b.n1 as u64;
        table.singles_b[i] += b.n2 as u64;
        table.coincidences[i] += b.n1.min(b.n2) as u64;
    }
    table
}

/// Legacy counting: at most one detection per side per trial is registered,
/// so singles add min(n, 1) and coincidences need both sides present.
pub fn count_legacy<'a, I>(buckets: I, trials: [u64; 4]) -> CountTable
where
    I: IntoIterator<Item = &'a TrialBucket>,
{
    let mut table = CountTable {
        trials,
        ..CountTable::default()
    };
    for b in buckets {
        let i = b.setting.index();
        table.singles_a[i] += b.n1.min(1) as u64;
        table.singles_b[i] += b.n2.min(1) as u64;
        table.coincidences[i] += u64::from(b.n1 >= 1 && b.n2 >= 1);
    }
    table
}

fn count_with_mode<'a, I>(mode: CountingMode, buckets: I, trials: [u64; 4]) -> CountTable
where
    I: IntoIterator<Item = &'a TrialBucket>,
{
    match mode {
        CountingMode::Full => count_full(buckets, trials),
        CountingMode::Legacy => count_legacy(buckets, trials),
    }
}

/// Whole-dataset count table, normalized by the file's total trial counts.
pub fn whole_dataset_table(
    file: &CompiledFile,
    params: &AnalysisParams,
) -> Result<CountTable, AnalysisError> {
    let assignment = assign_windows(file, params)?;
    let trials = file.total_trials.map(u64::from);
    Ok(count_with_mode(
        params.counting_mode,
        &assignment.buckets,
        trials,
    ))
}

/// Per-trial detection histogram for one side: number of trials (among
/// trials with at least one in-window detection) with each detection count.
pub fn histogram_per_trial(
    file: &CompiledFile,
    params: &AnalysisParams,
    side: Side,
) -> Result<std::collections::BTreeMap<u32, u64>, AnalysisError> {
    let assignment = assign_windows(file, params)?;
    let mut histogram = std::collections::BTreeMap::new();
    for b in &assignment.buckets {
        let count = match side {
            Side::One => b.n1,
            Side::Two => b.n2,
        };
        *histogram.entry(count).or_insert(0u64) += 1;
    }
    Ok(histogram)
}

/// One partition's counts and (for sufficient partitions) its CH metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOutcome {
    pub table: CountTable,
    pub result: Option<ChResult>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionAnalysis {
    pub partitions: Vec<PartitionOutcome>,
    pub report: PositivityReport,
}

impl PartitionAnalysis {
    pub fn results(&self) -> Vec<Option<ChResult>> {
        self.partitions.iter().map(|p| p.result).collect()
    }
}

/// Partitioned CH analysis: partitions are contiguous spans of
/// `partition_size` detection events; per-setting trial counts come from the
/// cumulative opening counters at the partition boundaries (the last
/// partition extends to the file totals, so partition tables sum exactly to
/// the whole-dataset table). Partitions lacking trials of any setting are
/// insufficient and excluded from the positivity denominator.
pub fn partition_analysis(
    file: &CompiledFile,
    params: &AnalysisParams,
) -> Result<PartitionAnalysis, AnalysisError> {
    let assignment = assign_windows(file, params)?;
    let num_events = file.events.len();
    let p = params.partition_size;
    let num_partitions = num_events.div_ceil(p);

    let mut tables = vec![CountTable::default(); num_partitions];

    let mut prev_boundary = [0u64; 4];
    for (k, table) in tables.iter_mut().enumerate() {
        let boundary: [u64; 4] = if k + 1 == num_partitions {
            file.total_trials.map(u64::from)
        } else {
            let last_event = (k + 1) * p - 1;
            file.events[last_event].trials.map(u64::from)
        };
        for s in 0..4 {
            table.trials[s] = boundary[s] - prev_boundary[s];
        }
        prev_boundary = boundary;
    }

    for b in &assignment.buckets {
        let k = b.first_event / p;
        let i = b.setting.index();
        match params.counting_mode {
            CountingMode::Full => {
                tables[k].singles_a[i] += b.n1 as u64;
                tables[k].singles_b[i] += b.n2 as u64;
                tables[k].coincidences[i] += b.n1.min(b.n2) as u64;
            }
            CountingMode::Legacy => {
                tables[k].singles_a[i] += b.n1.min(1) as u64;
                tables[k].singles_b[i] += b.n2.min(1) as u64;
                tables[k].coincidences[i] += u64::from(b.n1 >= 1 && b.n2 >= 1);
            }
        }
    }

    let partitions: Vec<PartitionOutcome> = tables
        .into_iter()
        .map(|table| {
            let result = ch::ch_linear(&table, params.averaging).ok();
            PartitionOutcome { table, result }
        })
        .collect();
    let results: Vec<Option<ChResult>> = partitions.iter().map(|o| o.result).collect();
    let report = ch::positivity(&results);

    Ok(PartitionAnalysis { partitions, report })
}

/// Objective evaluated at each delay-scan grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanObjective {
    /// Whole-dataset linear CH metric.
    ChLinear,
    /// Total coincidences over all settings.
    Coincidences,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayScan {
    pub best: DelaySet,
    pub best_value: f64,
    /// (delay_1, delay_2, value) triple per grid point, row-major over
    /// delay_1 then delay_2.
    pub surface: Vec<(f64, f64, f64)>,
}

/// Evaluate the objective over a 2-D delay grid and return the argmax plus
/// the whole surface for export.
pub fn scan_delays(
    file: &CompiledFile,
    params: &AnalysisParams,
    delays_1: &[f64],
    delays_2: &[f64],
    objective: ScanObjective,
) -> Result<DelayScan, AnalysisError> {
    params.validate()?;
    if delays_1.iter().chain(delays_2).any(|d| !d.is_finite()) {
        return Err(AnalysisError::NonFiniteDelay);
    }
    let grid: Vec<(f64, f64)> = delays_1
        .iter()
        .flat_map(|&d1| delays_2.iter().map(move |&d2| (d1, d2)))
        .collect();

    let surface: Vec<(f64, f64, f64)> = grid
        .par_iter()
        .map(|&(d1, d2)| {
            let point_params = AnalysisParams {
                delays: DelaySet::new(d1, d2),
                ..*params
            };
            let table = whole_dataset_table(file, &point_params).expect("validated params");
            let value = match objective {
                ScanObjective::ChLinear => ch::ch_linear(&table, params.averaging)
                    .map(|r| r.ch_linear)
                    .unwrap_or(f64::NEG_INFINITY),
                ScanObjective::Coincidences => table.coincidences.iter().sum::<u64>() as f64,
            };
            (d1, d2, value)
        })
        .collect();

    let mut best = (DelaySet::default(), f64::NEG_INFINITY);
    for &(d1, d2, value) in &surface {
        if value > best.1 {
            best = (DelaySet::new(d1, d2), value);
        }
    }

    Ok(DelayScan {
        best: best.0,
        best_value: best.1,
        surface,
    })
}

/// Positivity per window size: runs the partitioned analysis at each window.
pub fn scan_windows(
    file: &CompiledFile,
    params: &AnalysisParams,
    windows: &[f64],
) -> Result<Vec<(f64, PositivityReport)>, AnalysisError> {
    for &w in windows {
        AnalysisParams {
            window: w,
            ..*params
        }
        .validate()?;
    }
    windows
        .par_iter()
        .map(|&w| {
            let point_params = AnalysisParams {
                window: w,
                ..*params
            };
            partition_analysis(file, &point_params).map(|a| (w, a.report))
        })
        .collect()
}
