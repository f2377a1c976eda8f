mod commands;
mod config;

use std::process::ExitCode;

use acdc_core::AcdcError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

/// Adaptive constraint-driven traffic classification pipeline.
///
/// Stages exchange plain files: flow sets (JSON), a pool manifest and model
/// files, profile tables (CSV), scenarios (JSON) and traces (CSV).
#[derive(Debug, Parser)]
#[command(name = "acdc", version, args_override_self = true)]
pub struct Cli {
    /// TOML file whose keys are flag names of the chosen command; its values
    /// override flags given on the command line.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled flow set.
    Generate(GenerateArgs),
    /// Assemble labeled flows from pcap files, one class per file.
    Ingest(IngestArgs),
    /// Split data, rank fields by importance per bit and train the classifier pool.
    TrainPool(TrainPoolArgs),
    /// Profile every pool member over a batch-size grid.
    Profile(ProfileArgs),
    /// Fit the affine cost model to a measured profile table.
    Calibrate(CalibrateArgs),
    /// Replay a scenario through the scheduler.
    Simulate(SimulateArgs),
    /// Summarize a profile table and simulation traces.
    Report(ReportArgs),
    /// Dump the header field registry as CSV.
    Registry(RegistryArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of classes in the built-in profile preset.
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// Flows per class.
    #[arg(long, default_value_t = 100)]
    pub flows: usize,
    /// JSON generator config; replaces --classes/--flows.
    #[arg(long)]
    pub generator: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory; receives flows.json.
    #[arg(short, long, default_value = "data")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Capture files; the n-th file is class n, named after its file stem.
    #[arg(long = "pcap", required = true)]
    pub pcaps: Vec<PathBuf>,
    /// Packets retained per flow.
    #[arg(long, default_value_t = 4)]
    pub max_packets: usize,
    /// Output flow set file.
    #[arg(short, long, default_value = "data/flows.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainPoolArgs {
    /// Flow set to split into train and test halves.
    #[arg(long, default_value = "data/flows.json")]
    pub data: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub train_fraction: f64,
    /// Subset sizes, comma separated.
    #[arg(long, default_value = "1,2,3,4,5,6,7,8,9", value_delimiter = ',')]
    pub sizes: Vec<usize>,
    /// Subsets per size.
    #[arg(long, default_value_t = 10)]
    pub combos: usize,
    #[arg(long, default_value_t = 50)]
    pub rounds: usize,
    #[arg(long, default_value_t = 6)]
    pub depth: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    /// Permutations per field for importance.
    #[arg(long, default_value_t = 3)]
    pub importance_repeats: usize,
    /// Reuse a cached importances.csv instead of recomputing it.
    #[arg(long)]
    pub importances: Option<PathBuf>,
    /// Mixture components per class for the flow-statistics baseline.
    #[arg(long, default_value_t = 3)]
    pub components: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(short, long, default_value = "pool")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Measured,
    Modeled,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long, default_value = "pool/pool.csv")]
    pub pool: PathBuf,
    /// Held-out flows for F1 and measured batches.
    #[arg(long, default_value = "pool/test.json")]
    pub test: PathBuf,
    #[arg(long, default_value = "1,10,50,100,250,500,1000", value_delimiter = ',')]
    pub batch_sizes: Vec<u64>,
    #[arg(long, value_enum, default_value_t = Mode::Measured)]
    pub mode: Mode,
    /// Cost model JSON, required in modeled mode.
    #[arg(long)]
    pub cost_model: Option<PathBuf>,
    /// Timed runs per batch size in measured mode.
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, default_value_t = 1.2)]
    pub safety_factor: f64,
    #[arg(short, long, default_value = "profile.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, default_value = "profile.csv")]
    pub profile: PathBuf,
    #[arg(short, long, default_value = "cost_model.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "pool/pool.csv")]
    pub pool: PathBuf,
    #[arg(long, default_value = "profile.csv")]
    pub profile: PathBuf,
    /// Scenario JSON; without it a constant scenario is built from
    /// --duration, --rate and --mem.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    pub duration: u64,
    /// Flows per second.
    #[arg(long, default_value_t = 1000.0)]
    pub rate: f64,
    /// Memory budget: bytes, or with a KB/MB/GB suffix (powers of 1000).
    #[arg(long, default_value = "2GB")]
    pub mem: String,
    /// Minimum F1 requirement; overrides the scenario's.
    #[arg(long)]
    pub mpr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Receives trace.csv and decisions.csv.
    #[arg(short, long, default_value = "sim")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Expect {
    Increasing,
    Decreasing,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Profile table to summarize per classifier.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    /// Trace files in sweep order.
    #[arg(long = "trace")]
    pub traces: Vec<PathBuf>,
    /// Expected direction of the median batch size across the traces.
    #[arg(long, value_enum)]
    pub expect: Option<Expect>,
    /// Throughput window in ticks.
    #[arg(long, default_value_t = 1)]
    pub window: usize,
    /// Output directory for profile_summary.csv and sweep_summary.csv.
    #[arg(short, long, default_value = "report")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RegistryArgs {
    /// Write to a file instead of stdout.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let config = err.chain().any(|e| {
        e.downcast_ref::<AcdcError>().is_some_and(AcdcError::is_config)
            || e.downcast_ref::<config::ConfigError>().is_some()
    });
    if config {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = match config::parse_with_overrides(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(e) => {
            eprintln!("acdc: {e:#}");
            return ExitCode::from(exit_code(&e));
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("acdc: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
