mod cmds;
mod manifest;
mod report;

use clap::{Parser, Subcommand};

/// Clauser-Horne inequality analysis of time-tagged photon detection data,
/// plus the matching quantum joint-prediction simulator.
#[derive(Parser)]
#[command(name = "bellkit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize raw event text files: reinsert missing openings, sort by time
    Extract(cmds::ExtractArgs),
    /// Compile event text files (concatenated in order) into the binary format
    Compile(cmds::CompileArgs),
    /// Whole-dataset counts, CH metrics, and partitioned positivity
    Analyze(cmds::AnalyzeArgs),
    /// Scan positivity or the CH metric over window, delay, or partition axes
    Scan(cmds::ScanArgs),
    /// Per-trial detection histogram for one side
    Histogram(cmds::HistogramArgs),
    /// Monte Carlo quantum prediction at fixed analyzer angles
    Simulate(cmds::SimulateArgs),
    /// Powell direction-set search of the angle space for the maximal CH metric
    Search(cmds::SearchArgs),
    /// Emit a synthetic event stream from the simulator
    Synth(cmds::SynthArgs),
    /// Variable-window greedy coincidence scan for accidentals assessment
    Accidentals(cmds::AccidentalsArgs),
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Extract(args) => cmds::extract(args),
        Command::Compile(args) => cmds::compile(args),
        Command::Analyze(args) => cmds::analyze(args),
        Command::Scan(args) => cmds::scan(args),
        Command::Histogram(args) => cmds::histogram(args),
        Command::Simulate(args) => cmds::simulate(args),
        Command::Search(args) => cmds::search(args),
        Command::Synth(args) => cmds::synth(args),
        Command::Accidentals(args) => cmds::accidentals(args),
    }
}
