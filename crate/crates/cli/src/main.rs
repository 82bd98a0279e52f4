//! `crowdreview`: simulate platforms, analyze review tables, calibrate the
//! noise model and regenerate the scenario tables.
//!
//! Exit codes: 0 success, 1 usage, 2 invalid input data or config,
//! 3 runtime failure.

mod analyze;
mod config;
mod output;
mod reproduce;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "crowdreview", version, about = "Paper scoring from noisy reviews: simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the multi-year platform simulation.
    Simulate(simulate::SimulateArgs),
    /// Compute agreement and reviewer-quality metrics for review files.
    Analyze(analyze::AnalyzeArgs),
    /// Find the noise coefficient matching a target reviewer correlation.
    Calibrate(reproduce::CalibrateArgs),
    /// Regenerate the tables behind one scenario, or `all`.
    Reproduce(reproduce::ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutFormat {
    Csv,
    Json,
}

/// Output options shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Output directory.
    #[arg(long, env = "CROWDREVIEW_OUT", default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = OutFormat::Csv)]
    pub format: OutFormat,
    /// Worker threads for replicates (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Failure classes, mapped onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<crowdreview_core::sim::SimError> for CliError {
    fn from(e: crowdreview_core::sim::SimError) -> Self {
        use crowdreview_core::sim::SimError;
        match e {
            SimError::InvalidConfig(_) | SimError::UnknownMethod(_) | SimError::Gen(_) => CliError::Data(e.to_string()),
            SimError::RatingOutOfRange(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<crowdreview_core::experiments::ExperimentError> for CliError {
    fn from(e: crowdreview_core::experiments::ExperimentError) -> Self {
        use crowdreview_core::experiments::ExperimentError as E;
        match e {
            E::UnknownFigure { .. } | E::UnknownScenario { .. } | E::NoReplicates => CliError::Usage(e.to_string()),
            E::Sim(s) => s.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<crowdreview_core::ingest::IngestError> for CliError {
    fn from(e: crowdreview_core::ingest::IngestError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn init_threads(jobs: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => {
            init_threads(a.common.jobs)?;
            simulate::run(a)
        }
        Command::Analyze(a) => {
            init_threads(a.common.jobs)?;
            analyze::run(a)
        }
        Command::Calibrate(a) => {
            init_threads(a.common.jobs)?;
            reproduce::calibrate(a)
        }
        Command::Reproduce(a) => {
            init_threads(a.common.jobs)?;
            reproduce::run(a)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
