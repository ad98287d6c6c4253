use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod failure;

use failure::Failure;

/// Train, simulate and compare regression fallback controllers for DERs
/// in a medium-voltage feeder.
#[derive(Debug, Parser)]
#[command(name = "gridfall", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Run configuration (JSON); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Seed for the synthetic profile and any other randomness.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Worker threads for sweeps and case runs; all cores when omitted.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Regression learner.
    #[arg(long, global = true, value_enum)]
    pub learner: Option<LearnerArg>,
    /// Dead-band of the evaluation cost in pu.
    #[arg(long = "deadband-eval", global = true, value_name = "F")]
    pub deadband_eval: Option<f64>,
    /// Config override as `key=value`, dotted keys for nested fields; the
    /// value is parsed as JSON and taken as a string otherwise.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LearnerArg {
    Linear,
    Piecewise,
    Auto,
    Nnr,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the OPF sweep over all 9261 scenarios and fit the model files.
    Train {
        /// Abort with exit code 3 when more than this fraction of the
        /// sweep fails to converge.
        #[arg(long, default_value_t = 0.01)]
        max_failed_fraction: f64,
    },
    /// Simulate one control case.
    Simulate {
        /// Case number (1-4) or name, e.g. `opf_plus_regression`.
        #[arg(long)]
        case: Option<String>,
        /// Directory with `der_<id>.json` model files.
        #[arg(long, value_name = "DIR")]
        models: Option<PathBuf>,
    },
    /// Simulate several cases on the same profile and failure schedule.
    Compare {
        /// Comma-separated case numbers.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        cases: Vec<usize>,
        #[arg(long, value_name = "DIR")]
        models: Option<PathBuf>,
    },
    /// Switch to the retraining cost weights, collect setpoints, refit and
    /// compare stale against refitted fallback models.
    RetrainExperiment {
        /// Curtailment weight of the new cost function.
        #[arg(long, default_value_t = 1e5)]
        c_p: f64,
        /// Reactive-power weight of the new cost function.
        #[arg(long, default_value_t = 5e4)]
        c_q: f64,
    },
    /// Write model files as CSV curves for plotting.
    ExportModels {
        #[arg(long, value_name = "DIR")]
        models: Option<PathBuf>,
    },
    /// Check a grid file and print a summary.
    ValidateGrid {
        /// Grid file; the configured or bundled grid when omitted.
        #[arg(long, value_name = "PATH")]
        grid: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRIDFALL_LOG", "warn"))
        .format_timestamp(None)
        .init();

    if let Some(n) = cli.global.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot start {n} workers: {e}");
            return ExitCode::from(1);
        }
    }

    let result = match cli.command {
        Command::Train { max_failed_fraction } => commands::train(&cli.global, max_failed_fraction),
        Command::Simulate { case, models } => commands::simulate(&cli.global, case.as_deref(), models),
        Command::Compare { cases, models } => commands::compare(&cli.global, &cases, models),
        Command::RetrainExperiment { c_p, c_q } => commands::retrain_experiment(&cli.global, c_p, c_q),
        Command::ExportModels { models } => commands::export_models(&cli.global, models),
        Command::ValidateGrid { grid } => commands::validate_grid(&cli.global, grid),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", failure::describe(&e));
            ExitCode::from(Failure::exit_code(&e))
        }
    }
}
