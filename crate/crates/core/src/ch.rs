//! Clauser-Horne inequality metrics.
//!
//! Everything here is a pure function of a [`CountTable`]: the linear CH
//! metric (fourth variant: three positive coincidence terms, one negative,
//! two negative singles terms), its ratio form, and the positivity statistic
//! over partitioned runs with its binomial significance.

use crate::Setting;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChError {
    #[error("count table has no trials for setting {0}")]
    InsufficientTable(Setting),
}

/// Per-setting singles, coincidences, and trial counts: the sufficient
/// statistic for every CH metric.
///
/// Arrays are indexed by [`Setting::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CountTable {
    pub singles_a: [u64; 4],
    pub coincidences: [u64; 4],
    pub singles_b: [u64; 4],
    pub trials: [u64; 4],
}

impl CountTable {
    /// Rows in setting order, columns (singles_a, coincidences, singles_b,
    /// trials).
    pub fn from_rows(rows: [[u64; 4]; 4]) -> CountTable {
        let mut t = CountTable::default();
        for (i, row) in rows.iter().enumerate() {
            t.singles_a[i] = row[0];
            t.coincidences[i] = row[1];
            t.singles_b[i] = row[2];
            t.trials[i] = row[3];
        }
        t
    }

    pub fn add(&mut self, other: &CountTable) {
        for i in 0..4 {
            self.singles_a[i] += other.singles_a[i];
            self.coincidences[i] += other.coincidences[i];
            self.singles_b[i] += other.singles_b[i];
            self.trials[i] += other.trials[i];
        }
    }

    /// All four settings have at least one trial.
    pub fn is_sufficient(&self) -> bool {
        self.trials.iter().all(|&n| n >= 1)
    }
}

/// Linear and ratio forms of the CH metric for one count table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChResult {
    pub ch_linear: f64,
    pub ch_ratio: f64,
    pub violated: bool,
}

/// CH metric, fourth variant:
///
/// ```text
/// ch = C(a1b1)/N(a1b1) + C(a1b2)/N(a1b2) + C(a2b1)/N(a2b1) - C(a2b2)/N(a2b2)
///      - SA/N_SA - SB/N_SB
/// ```
///
/// Without singles-rate averaging, SA and SB are the singles recorded in the
/// a1b1 runs. With averaging, side A pools the a1b1 and a1b2 runs (both use
/// analyzer a1) and side B pools a1b1 and a2b1; pooled counts are divided by
/// pooled trials. Because both pooled runs hold the side's own analyzer
/// setting fixed and a side's detection rate does not depend on the far
/// side's setting, averaging changes the variance of the metric but not its
/// expectation.
///
/// The ratio form divides the three positive coincidence terms by the sum of
/// the negative terms; violation (ch > 0) then reads as ratio > 1.
pub fn ch_linear(table: &CountTable, averaging: bool) -> Result<ChResult, ChError> {
    for s in Setting::ALL {
        if table.trials[s.index()] == 0 {
            return Err(ChError::InsufficientTable(s));
        }
    }

    let rate = |count: u64, trials: u64| count as f64 / trials as f64;
    let c = |s: Setting| rate(table.coincidences[s.index()], table.trials[s.index()]);

    let positive = c(Setting::A1B1) + c(Setting::A1B2) + c(Setting::A2B1);

    let (sa, n_sa, sb, n_sb) = if averaging {
        (
            table.singles_a[Setting::A1B1.index()] + table.singles_a[Setting::A1B2.index()],
            table.trials[Setting::A1B1.index()] + table.trials[Setting::A1B2.index()],
            table.singles_b[Setting::A1B1.index()] + table.singles_b[Setting::A2B1.index()],
            table.trials[Setting::A1B1.index()] + table.trials[Setting::A2B1.index()],
        )
    } else {
        (
            table.singles_a[Setting::A1B1.index()],
            table.trials[Setting::A1B1.index()],
            table.singles_b[Setting::A1B1.index()],
            table.trials[Setting::A1B1.index()],
        )
    };

    let negative = c(Setting::A2B2) + rate(sa, n_sa) + rate(sb, n_sb);
    let ch = positive - negative;

    Ok(ChResult {
        ch_linear: ch,
        ch_ratio: positive / negative,
        violated: ch > 0.0,
    })
}

/// Positivity of a partitioned run: how many sufficient partitions violate
/// CH, and how significant that is against the null binomial(sufficient, ½).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityReport {
    /// Violating sufficient partitions.
    pub positive: u64,
    /// Partitions with trials in all four settings.
    pub sufficient: u64,
    /// All partitions, sufficient or not.
    pub total: u64,
    /// positive / sufficient; `None` when no partition is sufficient.
    pub positivity: Option<f64>,
    /// (positive - sufficient/2) / (√sufficient / 2); `None` when undefined.
    pub sigma: Option<f64>,
}

impl PositivityReport {
    pub fn insufficient(&self) -> u64 {
        self.total - self.sufficient
    }
}

/// Aggregate per-partition results; `None` entries are insufficient
/// partitions and are excluded from the denominator.
pub fn positivity(results: &[Option<ChResult>]) -> PositivityReport {
    let total = results.len() as u64;
    let sufficient = results.iter().flatten().count() as u64;
    let positive = results.iter().flatten().filter(|r| r.violated).count() as u64;

    let (positivity, sigma) = if sufficient == 0 {
        (None, None)
    } else {
        let n = sufficient as f64;
        let pos = positive as f64;
        (Some(pos / n), Some((pos - n / 2.0) / (n.sqrt() / 2.0)))
    };

    PositivityReport {
        positive,
        sufficient,
        total,
        positivity,
        sigma,
    }
}
