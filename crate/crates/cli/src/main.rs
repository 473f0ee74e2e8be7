//! `koopspec`: simulate, fit, inspect and reproduce the spectral-learning
//! experiments from TOML configs.
//!
//! Exit status is 0 on success, 1 when a computation fails a domain
//! contract, and 2 on usage or config errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{ReferenceSystem, System};

/// Environment variable supplying the default output directory.
pub const OUT_DIR_ENV: &str = "KOOPSPEC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "koopspec", version, about = "Kernel estimators of Koopman spectra")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Directory receiving every file this run writes.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = ".")]
    out_dir: PathBuf,
    /// Overrides the seed (or base seed) from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More log output; repeat for debug level.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a trajectory and write it as CSV.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        system: Option<System>,
        /// Number of recorded states.
        #[arg(long)]
        n: Option<usize>,
        /// Output file, relative to the output directory.
        #[arg(long, default_value = "trajectory.csv")]
        out: PathBuf,
    },
    /// Fit an estimator to a CSV trajectory and store the model.
    Fit {
        /// Regressor spec: method, rank, gamma and a [kernel] table.
        #[arg(long)]
        config: PathBuf,
        /// Trajectory CSV as written by `simulate`.
        #[arg(long)]
        data: PathBuf,
        /// Pair states this many rows apart.
        #[arg(long, default_value_t = 1)]
        lag: usize,
        #[arg(long, default_value = "model.ksm")]
        out: PathBuf,
    },
    /// Write the estimated eigenvalues of a stored model.
    Eig {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "eigenvalues.csv")]
        out: PathBuf,
    },
    /// Write the spectral report (distortion, bias, conditioning) of a model.
    Diagnose {
        #[arg(long)]
        model: PathBuf,
        /// Reference eigenvalues CSV with a `mu` column.
        #[arg(long, conflicts_with = "ou")]
        reference: Option<PathBuf>,
        /// Match against the analytic OU eigenvalues at unit lag.
        #[arg(long)]
        ou: bool,
        #[arg(long, value_enum, default_value_t = BiasForm::Root)]
        pcr_bias: BiasForm,
        #[arg(long, default_value = "report.csv")]
        out: PathBuf,
    },
    /// Write reference Koopman eigenvalues and eigenfunctions.
    Reference {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        system: Option<ReferenceSystem>,
        /// Number of eigenpairs.
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        lag_time: Option<f64>,
    },
    /// Run one of the packaged experiments.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
        /// Required for fig1, which needs at least `rank`.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BiasForm {
    Root,
    Plain,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ExperimentName {
    Fig1,
    Rates,
    ModelSelection,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] koopspec::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match (cli.global.quiet, cli.global.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match commands::dispatch(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
