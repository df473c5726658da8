//! `fcar` command-line tool: simulate FCAR data sets, fit SBK coefficient
//! curves, run relative-efficiency studies, and drive the order-selection
//! pipeline. Every command writes a manifest that fully determines a rerun.

mod commands;
mod manifest;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use commands::CliError;
use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "fcar",
    version,
    about = "Spline-backfitted kernel estimation for functional-coefficient autoregressive models"
)]
struct Cli {
    /// Directory for all output files
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    /// Worker threads (default: FCAR_THREADS or the number of cores);
    /// results do not depend on this
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exogenous,
    Recursive,
}

#[derive(clap::Args, Debug)]
struct SimulateArgs {
    /// Autoregressive order p
    #[arg(long)]
    p: usize,
    /// Delay d of the coefficient argument U_t = X_{t-d}
    #[arg(long)]
    d: usize,
    /// Coefficient amplitudes, e.g. 0.5,-0.5,0.5,-0.5
    #[arg(long = "A", value_delimiter = ',', allow_hyphen_values = true, required = true)]
    amplitudes: Vec<f64>,
    /// Frequency omega of the sinusoidal coefficients
    #[arg(long)]
    omega: f64,
    /// Sample size
    #[arg(long)]
    n: usize,
    /// Random seed
    #[arg(long)]
    seed: u64,
    /// Data-generating mode
    #[arg(long, value_enum, default_value = "exogenous")]
    mode: Mode,
    /// Burn-in length for recursive mode
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    /// Standard deviation of the innovations
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
}

#[derive(clap::Args, Debug)]
struct EstimateArgs {
    /// Series CSV (one value per line, or period,value)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Pre-built design CSV (t,response,delay,lag1,...), as written by
    /// `simulate` in exogenous mode
    #[arg(long)]
    design: Option<PathBuf>,
    /// Delay d
    #[arg(long)]
    d: usize,
    /// Order p
    #[arg(long)]
    p: usize,
    /// Number of points in the emitted coefficient curves
    #[arg(long, default_value_t = 101)]
    grid: usize,
    /// Fixed smoothing bandwidth (default: rule of thumb per component)
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Fraction of the delay range trimmed from each end of the curve grid
    #[arg(long, default_value_t = 0.0)]
    trim: f64,
}

#[derive(clap::Args, Debug)]
struct StudyArgs {
    /// Autoregressive order p
    #[arg(long)]
    p: usize,
    /// Sample sizes, e.g. 100,500,1000,1500
    #[arg(long = "n", value_delimiter = ',', required = true)]
    n_values: Vec<usize>,
    /// Replications per sample size
    #[arg(long)]
    reps: usize,
    /// Components to estimate, e.g. 1,4
    #[arg(long, value_delimiter = ',', required = true)]
    components: Vec<usize>,
    /// Random seed
    #[arg(long)]
    seed: u64,
    /// Frequency omega of the sinusoidal coefficients
    #[arg(long, default_value_t = 4.5)]
    omega: f64,
    /// Delay d (default: p + 1)
    #[arg(long)]
    d: Option<usize>,
    /// Amplitudes (default: alternating 0.5,-0.5,...)
    #[arg(long = "A", value_delimiter = ',', allow_hyphen_values = true)]
    amplitudes: Option<Vec<f64>>,
    /// Data-generating mode
    #[arg(long, value_enum, default_value = "exogenous")]
    mode: Mode,
    /// Standard deviation of the innovations
    #[arg(long, default_value_t = 1.0)]
    noise_scale: f64,
    /// Burn-in length for recursive mode
    #[arg(long, default_value_t = 500)]
    burn_in: usize,
    /// Evaluation grid size for the efficiency ratio
    #[arg(long, default_value_t = 101)]
    eval_points: usize,
    /// Fraction of the delay range trimmed from each side of the grid
    #[arg(long, default_value_t = 0.05)]
    eval_trim: f64,
    /// Reuse replication-0 bandwidths across each cell instead of
    /// recomputing the rule of thumb per replication
    #[arg(long)]
    fixed_bandwidth: bool,
    /// Rule-of-thumb kernel constant
    #[arg(long, default_value_t = fcar::kernel::ROT_KERNEL_CONSTANT)]
    rot_constant: f64,
}

#[derive(clap::Args, Debug)]
struct PipelineArgs {
    /// Input series CSV (strictly positive values unless --skip-log)
    #[arg(long)]
    input: PathBuf,
    /// Kernel bandwidth for the detrending stage, in time-index units
    #[arg(long, default_value_t = 30.0)]
    detrend_bandwidth: f64,
    /// Seasonal differencing lag
    #[arg(long, default_value_t = 4)]
    seasonal_lag: usize,
    /// Delay grid (default 1,...,10)
    #[arg(long = "d-set", value_delimiter = ',')]
    d_set: Option<Vec<usize>>,
    /// Order grid (default 2,...,10)
    #[arg(long = "p-set", value_delimiter = ',')]
    p_set: Option<Vec<usize>>,
    /// Skip the log stage for data already in logs
    #[arg(long)]
    skip_log: bool,
    /// Points in the emitted coefficient curves
    #[arg(long, default_value_t = 101)]
    curve_points: usize,
}

#[derive(clap::Args, Debug)]
struct RerunArgs {
    /// Manifest written by a previous run
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an FCAR data set
    Simulate(SimulateArgs),
    /// Fit SBK coefficient curves for a given (d, p)
    Estimate(EstimateArgs),
    /// Run a relative-efficiency replication study
    Study(StudyArgs),
    /// Log, detrend, difference, and select (d, p) by MSE grid search
    Pipeline(PipelineArgs),
    /// Re-execute a command from its manifest
    Rerun(RerunArgs),
}

fn resolve_threads(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| {
            std::env::var("FCAR_THREADS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .filter(|&t| t > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out_dir = cli.output_dir.clone();
    // rerun takes its thread count from the manifest it replays
    let (command, threads) = match cli.command {
        Command::Rerun(args) => {
            let manifest = RunManifest::read(&args.manifest).map_err(CliError::data)?;
            let threads = manifest
                .parameters
                .get("threads")
                .and_then(|t| t.parse().ok());
            let command = command_from_manifest(&manifest)?;
            (command, resolve_threads(threads))
        }
        other => (other, resolve_threads(cli.threads)),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .ok();

    match &command {
        Command::Simulate(args) => commands::cmd_simulate(args, &out_dir, threads),
        Command::Estimate(args) => commands::cmd_estimate(args, &out_dir, threads),
        Command::Study(args) => commands::cmd_study(args, &out_dir, threads),
        Command::Pipeline(args) => commands::cmd_pipeline(args, &out_dir, threads),
        Command::Rerun(_) => unreachable!("rerun resolves to a concrete command"),
    }
}

fn command_from_manifest(manifest: &RunManifest) -> Result<Command, CliError> {
    let bad = CliError::data;
    match manifest.command.as_str() {
        "simulate" => Ok(Command::Simulate(
            commands::simulate_args_from_manifest(manifest).map_err(bad)?,
        )),
        "estimate" => Ok(Command::Estimate(
            commands::estimate_args_from_manifest(manifest).map_err(bad)?,
        )),
        "study" => Ok(Command::Study(
            commands::study_args_from_manifest(manifest).map_err(bad)?,
        )),
        "pipeline" => Ok(Command::Pipeline(
            commands::pipeline_args_from_manifest(manifest).map_err(bad)?,
        )),
        other => Err(CliError::data(format!(
            "manifest names unknown command {other:?}"
        ))),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code());
    }
}
