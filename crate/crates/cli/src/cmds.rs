//! Subcommand implementations.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};

use bellkit::analysis::{self, AnalysisParams, CountingMode, DelaySet, ScanObjective};
use bellkit::ch::{self, CountTable, PositivityReport};
use bellkit::ingest::{self, RawEvent};
use bellkit::quantum::{AngleSet, EntangledState};
use bellkit::sim::{self, SimConfig, SynthTiming, TICKS_PER_US};
use bellkit::{Setting, Side};

use crate::manifest::RunManifest;
use crate::report::{emit, full, metric, sci};

/// Relative input paths resolve against this directory when it is set.
const DATA_DIR_ENV: &str = "BELLKIT_DATA_DIR";

fn resolve_input(path: &Path) -> PathBuf {
    if path.is_relative() && !path.exists() {
        if let Some(base) = std::env::var_os(DATA_DIR_ENV) {
            let joined = PathBuf::from(base).join(path);
            if joined.exists() {
                return joined;
            }
        }
    }
    path.to_path_buf()
}

/// Parse "start:stop:step" (inclusive of stop within rounding) or a comma
/// list into an ascending grid.
fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let values: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            bail!("grid must be start:stop:step or a comma list, got {text:?}");
        }
        let start: f64 = parts[0].parse()?;
        let stop: f64 = parts[1].parse()?;
        let step: f64 = parts[2].parse()?;
        if step <= 0.0 || stop < start {
            bail!("grid {text:?} is not ascending");
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        (0..=n).map(|k| start + k as f64 * step).collect()
    } else {
        text.split(',')
            .map(|f| f.trim().parse::<f64>().map_err(Into::into))
            .collect::<Result<Vec<f64>>>()?
    };
    if values.is_empty() {
        bail!("grid {text:?} is empty");
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        bail!("grid {text:?} must be strictly ascending");
    }
    Ok(values)
}

fn parse_usize_list(text: &str) -> Result<Vec<usize>> {
    let values: Vec<usize> = text
        .split(',')
        .map(|f| f.trim().parse::<usize>().map_err(Into::into))
        .collect::<Result<Vec<usize>>>()?;
    if values.is_empty() {
        bail!("list {text:?} is empty");
    }
    Ok(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Full,
    Legacy,
}

impl From<ModeArg> for CountingMode {
    fn from(m: ModeArg) -> CountingMode {
        match m {
            ModeArg::Full => CountingMode::Full,
            ModeArg::Legacy => CountingMode::Legacy,
        }
    }
}

impl std::fmt::Display for ModeArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModeArg::Full => f.write_str("full"),
            ModeArg::Legacy => f.write_str("legacy"),
        }
    }
}

/// Analysis degrees of freedom shared by analyze/scan/histogram.
#[derive(Debug, Args)]
pub struct AnalysisOpts {
    /// Window size after each opening, microseconds
    #[arg(long, default_value_t = 2.5)]
    pub window: f64,
    /// Side-1 time-of-flight delay, microseconds (subtracted)
    #[arg(long, default_value_t = 0.0)]
    pub delay1: f64,
    /// Side-2 time-of-flight delay, microseconds (subtracted)
    #[arg(long, default_value_t = 0.0)]
    pub delay2: f64,
    /// Detection events per partition
    #[arg(long, default_value_t = 10_000)]
    pub partition: usize,
    /// Pool singles over the two runs sharing each side's analyzer setting
    #[arg(long)]
    pub averaging: bool,
    /// Counting mode
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    pub mode: ModeArg,
    /// Opening cycle period, microseconds
    #[arg(long, default_value_t = 40.0)]
    pub period: f64,
}

impl AnalysisOpts {
    fn params(&self) -> AnalysisParams {
        AnalysisParams {
            window: self.window,
            delays: DelaySet::new(self.delay1, self.delay2),
            partition_size: self.partition,
            averaging: self.averaging,
            counting_mode: self.mode.into(),
            period: self.period,
        }
    }

    fn record(&self, manifest: &mut RunManifest) {
        manifest
            .param("window", self.window)
            .param("delay1", self.delay1)
            .param("delay2", self.delay2)
            .param("partition", self.partition)
            .param("averaging", self.averaging)
            .param("mode", self.mode)
            .param("period", self.period);
    }
}

/// Simulation degrees of freedom shared by simulate/search/synth.
#[derive(Debug, Args)]
pub struct SimOpts {
    /// Source state maximality factor
    #[arg(long, default_value_t = 0.26)]
    pub r: f64,
    /// Detection efficiency per photon
    #[arg(long, default_value_t = 0.75)]
    pub efficiency: f64,
    /// Probability of one extra detection per side per trial
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Trials per setting combination per run
    #[arg(long, default_value_t = 10_000)]
    pub partition: u64,
    /// Independent runs per experiment
    #[arg(long, default_value_t = 100)]
    pub runs: u64,
    /// Pool singles over the two runs sharing each side's analyzer setting
    #[arg(long)]
    pub averaging: bool,
    /// Random seed
    #[arg(long)]
    pub seed: u64,
}

impl SimOpts {
    fn record(&self, manifest: &mut RunManifest) {
        manifest
            .param("r", self.r)
            .param("efficiency", self.efficiency)
            .param("noise", self.noise)
            .param("partition", self.partition)
            .param("runs", self.runs)
            .param("averaging", self.averaging);
        manifest.seed = Some(self.seed);
    }

    fn config(&self, angles: AngleSet) -> Result<SimConfig> {
        Ok(SimConfig {
            state: EntangledState::new(self.r).map_err(anyhow::Error::msg)?,
            angles,
            efficiency: self.efficiency,
            noise: self.noise,
            partition_size: self.partition,
            runs: self.runs,
            averaging: self.averaging,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Args)]
pub struct AngleOpts {
    /// Side-A analyzer angle 1, radians
    #[arg(long)]
    pub a1: f64,
    /// Side-A analyzer angle 2, radians
    #[arg(long)]
    pub a2: f64,
    /// Side-B analyzer angle 1, radians
    #[arg(long)]
    pub b1: f64,
    /// Side-B analyzer angle 2, radians
    #[arg(long)]
    pub b2: f64,
}

impl AngleOpts {
    fn angles(&self) -> Result<AngleSet> {
        AngleSet::new(self.a1, self.a2, self.b1, self.b2).map_err(anyhow::Error::msg)
    }

    fn record(&self, manifest: &mut RunManifest) {
        manifest
            .param("a1", self.a1)
            .param("a2", self.a2)
            .param("b1", self.b1)
            .param("b2", self.b2);
    }
}

// ---------------------------------------------------------------------------
// extract / compile / synth
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Raw event text files, processed independently
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Directory for the normalized output files
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Pockels cell opening period, microseconds
    #[arg(long, default_value_t = 40.0)]
    pub period_us: f64,
    /// Reinsert the missing openings at +period/2
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub reinsert: bool,
}

pub fn extract(args: ExtractArgs) -> Result<()> {
    let mut manifest = RunManifest::new("extract");
    manifest
        .param("period_us", args.period_us)
        .param("reinsert", args.reinsert);
    let period_ticks = (args.period_us * TICKS_PER_US as f64).round() as u64;

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;

    let mut body = String::new();
    let _ = writeln!(body, "input\tevents_in\tevents_out\toutput");
    for input in &args.inputs {
        let input = resolve_input(input);
        manifest.input(&input)?;
        let events = ingest::parse_events(BufReader::new(
            File::open(&input).with_context(|| format!("cannot open {}", input.display()))?,
        ))?;
        let events_in = events.len();
        let events = if args.reinsert {
            ingest::insert_missing_openings(events, period_ticks)
        } else {
            events
        };

        let name = input
            .file_name()
            .context("input path has no file name")?
            .to_owned();
        let out_path = args.out_dir.join(name);
        if out_path == input {
            bail!(
                "output {} would overwrite its input; choose another --out-dir",
                out_path.display()
            );
        }
        let mut writer = BufWriter::new(File::create(&out_path)?);
        for e in &events {
            writeln!(writer, "{}", format_event(e))?;
        }
        writer.flush()?;
        manifest.output(&out_path);
        let _ = writeln!(
            body,
            "{}\t{}\t{}\t{}",
            input.display(),
            events_in,
            events.len(),
            out_path.display()
        );
    }

    emit(None, &manifest, &body, None)
}

fn format_event(e: &RawEvent) -> String {
    let kind = match e.kind {
        ingest::EventKind::Opening => 15,
        ingest::EventKind::Detection(Side::One) => 1,
        ingest::EventKind::Detection(Side::Two) => 2,
    };
    format!("{} {} {}", e.timetag, e.setting.code(), kind)
}

#[derive(Debug, Args)]
pub struct CompileArgs {
    /// Event text files, concatenated in the order given
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output binary file
    #[arg(long)]
    pub out: PathBuf,
}

pub fn compile(args: CompileArgs) -> Result<()> {
    let mut manifest = RunManifest::new("compile");
    let mut events = Vec::new();
    for input in &args.inputs {
        let input = resolve_input(input);
        manifest.input(&input)?;
        let file =
            File::open(&input).with_context(|| format!("cannot open {}", input.display()))?;
        events.extend(ingest::parse_events(BufReader::new(file))?);
    }
    let compiled = ingest::compile(&events)?;
    ingest::store_path(&compiled, &args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    manifest.output(&args.out);

    let mut body = String::new();
    let _ = writeln!(
        body,
        "detection_events = {}",
        compiled.num_detection_events()
    );
    let _ = writeln!(body, "orphan_detections = {}", compiled.orphan_detections());
    for s in Setting::ALL {
        let _ = writeln!(body, "trials_{s} = {}", compiled.total_trials[s.index()]);
    }
    emit(None, &manifest, &body, None)
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub sim: SimOpts,
    #[command(flatten)]
    pub angles: AngleOpts,
    /// Opening period, microseconds
    #[arg(long, default_value_t = 40.0)]
    pub period_us: f64,
    /// Opening window length, microseconds
    #[arg(long, default_value_t = 2.0)]
    pub window_us: f64,
    /// Tag of the first opening, raw time units
    #[arg(long, default_value_t = 0)]
    pub start_tag: u64,
    /// Draw the setting of each trial at random instead of cycling
    #[arg(long)]
    pub random_settings: bool,
    /// Output event text file
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut manifest = RunManifest::new("synth");
    args.sim.record(&mut manifest);
    args.angles.record(&mut manifest);
    manifest
        .param("period_us", args.period_us)
        .param("window_us", args.window_us)
        .param("start_tag", args.start_tag)
        .param("random_settings", args.random_settings);

    let config = args.sim.config(args.angles.angles()?)?;
    let timing = SynthTiming {
        period_ticks: (args.period_us * TICKS_PER_US as f64).round() as u64,
        window_ticks: (args.window_us * TICKS_PER_US as f64).round() as u64,
        start_tag: args.start_tag,
        random_settings: args.random_settings,
    };
    if timing.window_ticks == 0 || timing.window_ticks > timing.period_ticks / 2 {
        bail!(
            "window {} us must be positive and at most half the period {} us",
            args.window_us,
            args.period_us
        );
    }

    let mut writer = BufWriter::new(File::create(&args.out)?);
    sim::emit_synthetic_events(&config, &timing, &mut writer)?;
    writer.flush()?;
    manifest.output(&args.out);

    let openings = config.runs * config.partition_size * 4;
    let mut body = String::new();
    let _ = writeln!(body, "openings = {openings}");
    let _ = writeln!(body, "output = {}", args.out.display());
    emit(None, &manifest, &body, None)
}

// ---------------------------------------------------------------------------
// analyze / scan / histogram / accidentals
// ---------------------------------------------------------------------------

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Compiled binary event file
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub opts: AnalysisOpts,
    /// Report file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn count_table_block(table: &CountTable) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "setting\tsingles_a\tcoincidences\tsingles_b\ttrials");
    for set in Setting::ALL {
        let i = set.index();
        let _ = writeln!(
            s,
            "{set}\t{}\t{}\t{}\t{}",
            table.singles_a[i], table.coincidences[i], table.singles_b[i], table.trials[i]
        );
    }
    s
}

fn positivity_block(report: &PositivityReport, precise: bool) -> String {
    let fmt = |x: f64| if precise { full(x) } else { metric(x) };
    let mut s = String::new();
    let _ = writeln!(s, "partitions = {}", report.total);
    let _ = writeln!(s, "sufficient = {}", report.sufficient);
    let _ = writeln!(s, "insufficient = {}", report.insufficient());
    let _ = writeln!(s, "positive = {}", report.positive);
    match (report.positivity, report.sigma) {
        (Some(p), Some(sigma)) => {
            let _ = writeln!(s, "positivity = {}", fmt(p));
            let _ = writeln!(s, "sigma = {}", fmt(sigma));
        }
        _ => {
            let _ = writeln!(s, "positivity = undefined (no sufficient partition)");
        }
    }
    s
}

pub fn analyze(args: AnalyzeArgs) -> Result<()> {
    let input = resolve_input(&args.input);
    let mut manifest = RunManifest::new("analyze");
    args.opts.record(&mut manifest);
    manifest.input(&input)?;
    if let Some(out) = &args.out {
        manifest.output(out);
    }

    let file = ingest::load_path(&input)?;
    let params = args.opts.params();
    let assignment = analysis::assign_windows(&file, &params)?;
    let trials = file.total_trials.map(u64::from);
    let table = match params.counting_mode {
        CountingMode::Full => analysis::count_full(&assignment.buckets, trials),
        CountingMode::Legacy => analysis::count_legacy(&assignment.buckets, trials),
    };
    let result = ch::ch_linear(&table, params.averaging);
    let partitioned = analysis::partition_analysis(&file, &params)?;

    let render = |precise: bool| -> String {
        let fmt = |x: f64| if precise { full(x) } else { metric(x) };
        let mut body = String::new();
        let _ = writeln!(body, "== whole dataset ==");
        body.push_str(&count_table_block(&table));
        let _ = writeln!(
            body,
            "in_window_detections = {}",
            assignment.in_window_detections()
        );
        let _ = writeln!(body, "dropped_out_of_window = {}", assignment.dropped);
        match &result {
            Ok(r) => {
                let _ = writeln!(
                    body,
                    "ch_linear = {}",
                    if precise {
                        full(r.ch_linear)
                    } else {
                        sci(r.ch_linear)
                    }
                );
                let _ = writeln!(body, "ch_ratio = {}", fmt(r.ch_ratio));
                let _ = writeln!(body, "violated = {}", r.violated);
            }
            Err(e) => {
                let _ = writeln!(body, "ch_linear = undefined ({e})");
            }
        }
        let _ = writeln!(body, "== partitioned ==");
        body.push_str(&positivity_block(&partitioned.report, precise));
        body
    };

    emit(
        args.out.as_deref(),
        &manifest,
        &render(false),
        Some(&render(true)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScanAxis {
    Window,
    Delay,
    Partition,
}

impl std::fmt::Display for ScanAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScanAxis::Window => f.write_str("window"),
            ScanAxis::Delay => f.write_str("delay"),
            ScanAxis::Partition => f.write_str("partition"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Ch,
    Coincidences,
}

impl std::fmt::Display for ObjectiveArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ObjectiveArg::Ch => f.write_str("ch"),
            ObjectiveArg::Coincidences => f.write_str("coincidences"),
        }
    }
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Compiled binary event file
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub axis: ScanAxis,
    /// Grid for the window axis (us) or partition axis (sizes):
    /// start:stop:step or a comma list
    #[arg(long)]
    pub grid: Option<String>,
    /// Side-1 delay grid for the delay axis, us
    #[arg(long)]
    pub grid1: Option<String>,
    /// Side-2 delay grid for the delay axis, us
    #[arg(long)]
    pub grid2: Option<String>,
    /// Objective for the delay axis
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Ch)]
    pub objective: ObjectiveArg,
    #[command(flatten)]
    pub opts: AnalysisOpts,
    /// Report file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn scan(args: ScanArgs) -> Result<()> {
    let input = resolve_input(&args.input);
    let mut manifest = RunManifest::new("scan");
    args.opts.record(&mut manifest);
    manifest.param("axis", args.axis);
    manifest.input(&input)?;
    if let Some(out) = &args.out {
        manifest.output(out);
    }

    let file = ingest::load_path(&input)?;
    let params = args.opts.params();

    let (body, full_body) = match args.axis {
        ScanAxis::Window => {
            let grid_text = args
                .grid
                .as_deref()
                .context("--grid is required for the window axis")?;
            manifest.param("grid", grid_text);
            let grid = parse_grid(grid_text)?;
            let rows = analysis::scan_windows(&file, &params, &grid)?;
            let render = |precise: bool| {
                let fmt = |x: f64| if precise { full(x) } else { metric(x) };
                let mut s = String::new();
                let _ = writeln!(s, "window_us\tpositivity\tinsufficient\ttotal");
                for (w, report) in &rows {
                    let positivity = report.positivity.map_or("undefined".to_string(), fmt);
                    let _ = writeln!(
                        s,
                        "{}\t{}\t{}\t{}",
                        fmt(*w),
                        positivity,
                        report.insufficient(),
                        report.total
                    );
                }
                s
            };
            (render(false), render(true))
        }
        ScanAxis::Partition => {
            let grid_text = args
                .grid
                .as_deref()
                .context("--grid is required for the partition axis")?;
            manifest.param("grid", grid_text);
            let sizes = parse_usize_list(grid_text)?;
            let render = |precise: bool| -> Result<String> {
                let fmt = |x: f64| if precise { full(x) } else { metric(x) };
                let mut s = String::new();
                let _ = writeln!(s, "partition_size\tpositivity\tinsufficient\ttotal");
                for &p in &sizes {
                    let point = AnalysisParams {
                        partition_size: p,
                        ..params
                    };
                    let a = analysis::partition_analysis(&file, &point)?;
                    let positivity = a.report.positivity.map_or("undefined".to_string(), fmt);
                    let _ = writeln!(
                        s,
                        "{p}\t{}\t{}\t{}",
                        positivity,
                        a.report.insufficient(),
                        a.report.total
                    );
                }
                Ok(s)
            };
            (render(false)?, render(true)?)
        }
        ScanAxis::Delay => {
            let g1_text = args
                .grid1
                .as_deref()
                .context("--grid1 is required for the delay axis")?;
            let g2_text = args
                .grid2
                .as_deref()
                .context("--grid2 is required for the delay axis")?;
            manifest.param("grid1", g1_text);
            manifest.param("grid2", g2_text);
            manifest.param("objective", args.objective);
            let g1 = parse_grid(g1_text)?;
            let g2 = parse_grid(g2_text)?;
            let objective = match args.objective {
                ObjectiveArg::Ch => ScanObjective::ChLinear,
                ObjectiveArg::Coincidences => ScanObjective::Coincidences,
            };
            let scan = analysis::scan_delays(&file, &params, &g1, &g2, objective)?;
            let render = |precise: bool| {
                let fmt = |x: f64| if precise { full(x) } else { metric(x) };
                let mut s = String::new();
                let _ = writeln!(s, "best_delay1 = {}", fmt(scan.best.delay_1));
                let _ = writeln!(s, "best_delay2 = {}", fmt(scan.best.delay_2));
                let _ = writeln!(
                    s,
                    "best_value = {}",
                    if precise {
                        full(scan.best_value)
                    } else {
                        sci(scan.best_value)
                    }
                );
                let _ = writeln!(s, "delay1\tdelay2\tvalue");
                for (d1, d2, v) in &scan.surface {
                    let _ = writeln!(
                        s,
                        "{}\t{}\t{}",
                        fmt(*d1),
                        fmt(*d2),
                        if precise { full(*v) } else { sci(*v) }
                    );
                }
                s
            };
            (render(false), render(true))
        }
    };

    emit(args.out.as_deref(), &manifest, &body, Some(&full_body))
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    /// Compiled binary event file
    #[arg(long)]
    pub input: PathBuf,
    /// Detector side (1 or 2)
    #[arg(long)]
    pub side: u8,
    #[command(flatten)]
    pub opts: AnalysisOpts,
    /// Report file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn histogram(args: HistogramArgs) -> Result<()> {
    let side = Side::from_channel(args.side)
        .with_context(|| format!("side must be 1 or 2, got {}", args.side))?;
    let input = resolve_input(&args.input);
    let mut manifest = RunManifest::new("histogram");
    args.opts.record(&mut manifest);
    manifest.param("side", args.side);
    manifest.input(&input)?;
    if let Some(out) = &args.out {
        manifest.output(out);
    }

    let file = ingest::load_path(&input)?;
    let hist = analysis::histogram_per_trial(&file, &args.opts.params(), side)?;

    let mut body = String::new();
    let _ = writeln!(body, "detections_per_trial\ttrials");
    let max_count = hist.keys().max().copied().unwrap_or(0);
    for k in 0..=max_count {
        let _ = writeln!(body, "{k}\t{}", hist.get(&k).copied().unwrap_or(0));
    }
    emit(args.out.as_deref(), &manifest, &body, None)
}

#[derive(Debug, Args)]
pub struct AccidentalsArgs {
    /// Compiled binary event file
    #[arg(long)]
    pub input: PathBuf,
    /// Side-1 time-of-flight delay, microseconds
    #[arg(long, default_value_t = 0.0)]
    pub delay1: f64,
    /// Side-2 time-of-flight delay, microseconds
    #[arg(long, default_value_t = 0.0)]
    pub delay2: f64,
    /// Coincidence window grid, nanoseconds: start:stop:step or comma list
    #[arg(long)]
    pub grid: String,
    /// Opening duration used to pre-filter events, microseconds
    #[arg(long, default_value_t = 2.0)]
    pub opening_us: f64,
    /// Opening cycle period, microseconds
    #[arg(long, default_value_t = 40.0)]
    pub period: f64,
    /// Knee above which slopes must be negligible, nanoseconds
    #[arg(long, default_value_t = 500.0)]
    pub knee_ns: f64,
    /// Negligibility threshold as a fraction of C/W
    #[arg(long, default_value_t = 0.01)]
    pub fraction: f64,
    /// Report file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn accidentals(args: AccidentalsArgs) -> Result<()> {
    let input = resolve_input(&args.input);
    let mut manifest = RunManifest::new("accidentals");
    manifest
        .param("delay1", args.delay1)
        .param("delay2", args.delay2)
        .param("grid", &args.grid)
        .param("opening_us", args.opening_us)
        .param("period", args.period)
        .param("knee_ns", args.knee_ns)
        .param("fraction", args.fraction);
    manifest.input(&input)?;
    if let Some(out) = &args.out {
        manifest.output(out);
    }

    let file = ingest::load_path(&input)?;
    let grid = parse_grid(&args.grid)?;
    let curve = bellkit::accidentals::scan_curve(
        &file,
        DelaySet::new(args.delay1, args.delay2),
        &grid,
        args.opening_us,
        args.period,
        args.knee_ns,
        args.fraction,
    )?;

    let render = |precise: bool| {
        let fmt = |x: f64| if precise { full(x) } else { metric(x) };
        let mut s = String::new();
        let _ = writeln!(s, "accidentals_negligible = {}", curve.negligible);
        let _ = writeln!(
            s,
            "window_ns\tc_a1b1\tc_a1b2\tc_a2b1\tc_a2b2\tch\tdcdw_a1b1\tdcdw_a1b2\tdcdw_a2b1\tdcdw_a2b2"
        );
        for (i, &w) in curve.windows_ns.iter().enumerate() {
            let _ = write!(s, "{}", fmt(w));
            for set in 0..4 {
                let _ = write!(s, "\t{}", curve.counts[set][i]);
            }
            let _ = write!(
                s,
                "\t{}",
                if precise {
                    full(curve.ch[i])
                } else {
                    sci(curve.ch[i])
                }
            );
            for set in 0..4 {
                let _ = write!(
                    s,
                    "\t{}",
                    if precise {
                        full(curve.dcdw[set][i])
                    } else {
                        sci(curve.dcdw[set][i])
                    }
                );
            }
            let _ = writeln!(s);
        }
        s
    };

    emit(
        args.out.as_deref(),
        &manifest,
        &render(false),
        Some(&render(true)),
    )
}

// ---------------------------------------------------------------------------
// simulate / search
// ---------------------------------------------------------------------------

fn prediction_block(pred: &bellkit::sim::PredictionResult, precise: bool) -> String {
    let fmt = |x: f64| if precise { full(x) } else { metric(x) };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "mean_ch = {}",
        if precise {
            full(pred.mean_ch)
        } else {
            sci(pred.mean_ch)
        }
    );
    let _ = writeln!(s, "mean_ch_ratio = {}", fmt(pred.mean_ratio));
    let _ = writeln!(s, "positivity = {}", fmt(pred.positivity));
    let _ = writeln!(s, "replicates = {}", pred.replicates);
    let _ = writeln!(
        s,
        "angles_rad = {} {} {} {}",
        fmt(pred.angles.a1),
        fmt(pred.angles.a2),
        fmt(pred.angles.b1),
        fmt(pred.angles.b2)
    );
    s
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimOpts,
    #[command(flatten)]
    pub angles: AngleOpts,
    /// Report file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let mut manifest = RunManifest::new("simulate");
    args.sim.record(&mut manifest);
    args.angles.record(&mut manifest);
    if let Some(out) = &args.out {
        manifest.output(out);
    }
    let config = args.sim.config(args.angles.angles()?)?;
    let pred = sim::run_experiment(&config)?;
    emit(
        args.out.as_deref(),
        &manifest,
        &prediction_block(&pred, false),
        Some(&prediction_block(&pred, true)),
    )
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub sim: SimOpts,
    /// Independent random restarts of the Powell search
    #[arg(long, default_value_t = 4)]
    pub restarts: u32,
    /// Report file (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn search(args: SearchArgs) -> Result<()> {
    let mut manifest = RunManifest::new("search");
    args.sim.record(&mut manifest);
    manifest.param("restarts", args.restarts);
    if let Some(out) = &args.out {
        manifest.output(out);
    }
    let state = EntangledState::new(args.sim.r).map_err(anyhow::Error::msg)?;
    let pred = sim::powell_search(
        state,
        args.sim.efficiency,
        args.sim.noise,
        args.sim.partition,
        args.sim.runs,
        args.sim.averaging,
        args.restarts,
        args.sim.seed,
    )?;
    emit(
        args.out.as_deref(),
        &manifest,
        &prediction_block(&pred, false),
        Some(&prediction_block(&pred, true)),
    )
}
