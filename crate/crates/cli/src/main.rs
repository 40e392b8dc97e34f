//! `fom`: bound evaluation, parameter optimization, adversarial simulation
//! and self-checks from the command line.
//!
//! Exit codes: 0 success, 1 a verification failed (budgets, convergence,
//! checks), 2 usage error, 3 runtime error or contract violation.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(
    name = "fom",
    version,
    about = "Impossibility bounds for fully online fractional matching"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate the limit bound at given parameters.
    Bound(BoundArgs),
    /// Minimize the bound over the construction parameters.
    Optimize(OptimizeArgs),
    /// Run the adversarial construction against an online algorithm.
    Simulate(SimulateArgs),
    /// Run the self-check suite.
    Check(CheckArgs),
    /// Write instances, event schedules or the JSON schemas.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Formula {
    General,
    L0,
    L3,
}

#[derive(Debug, Args)]
struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BoundArgs {
    /// Base growth factor, decimal or `p/q`.
    #[arg(long)]
    lambda: String,
    /// Comma-separated growth factors of the extra levels.
    #[arg(long, value_delimiter = ',')]
    gammas: Vec<String>,
    #[arg(long, value_enum, default_value_t = Formula::General)]
    formula: Formula,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    /// Number of extra levels.
    #[arg(long, conflicts_with = "table")]
    ell: Option<usize>,
    /// Emit one row for every ell up to `--max-ell`.
    #[arg(long, requires = "max_ell")]
    table: bool,
    #[arg(long)]
    max_ell: Option<usize>,
    #[arg(long, default_value_t = fom_core::optimizer::DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long, default_value_t = fom_core::optimizer::DEFAULT_TOLERANCE)]
    tol: f64,
    /// Single start point `lambda,gamma_1,...`; replaces the multistart.
    #[arg(long, value_delimiter = ',', conflicts_with = "table")]
    init: Vec<String>,
    /// Print unrounded values.
    #[arg(long)]
    full_precision: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct InstanceArgs {
    /// Instance file as written by `export instance`.
    #[arg(long, conflicts_with_all = ["h", "lambda", "gammas", "scale"])]
    params: Option<PathBuf>,
    /// Number of base levels.
    #[arg(long, default_value_t = 0)]
    h: usize,
    #[arg(long, default_value = "2")]
    lambda: String,
    #[arg(long, value_delimiter = ',')]
    gammas: Vec<String>,
    /// Multiple of the least vertex scale that keeps every level integral.
    #[arg(long, default_value_t = 1)]
    scale: u64,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// `waterfilling` or `random:<seed>`.
    #[arg(long, default_value = "waterfilling")]
    alg: String,
    /// Write a JSON-lines event trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print exact rationals instead of 6-decimal roundings.
    #[arg(long)]
    full_precision: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Smaller instances; finishes well under a minute.
    #[arg(long)]
    quick: bool,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[command(subcommand)]
    what: ExportCommand,
}

#[derive(Debug, Subcommand)]
enum ExportCommand {
    /// Instance file for `simulate --params`.
    Instance {
        #[command(flatten)]
        instance: InstanceArgs,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Phase-by-phase event schedule.
    Schedule {
        #[command(flatten)]
        instance: InstanceArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// The JSON schemas every JSON output validates against.
    Schemas {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 3,
        }
    }
}

/// Whether everything the command verified held.
type Verdict = bool;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bound(args) => commands::bound(&args),
        Command::Optimize(args) => commands::optimize(&args),
        Command::Simulate(args) => commands::simulate(&args),
        Command::Check(args) => commands::check(&args),
        Command::Export(args) => commands::export(&args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
