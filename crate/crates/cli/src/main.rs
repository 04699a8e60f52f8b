//! `hawkes`: simulate, fit, evaluate and benchmark multivariate Hawkes models.

mod args;
mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use args::{CheckBoundsArgs, EvalArgs, ExperimentArgs, FitArgs, SimulateArgs, WeightsArgs, XvalArgs};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "hawkes", version, about = "Multivariate Hawkes simulation and sparse + low-rank network inference")]
struct Cli {
    /// JSON file supplying defaults for the subcommand's flags (flags take precedence).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel sections (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate events from explicit parameters or the community benchmark.
    Simulate(SimulateArgs),
    /// Estimate (mu, A) from an event file with one of the five procedures.
    Fit(FitArgs),
    /// Compare an estimate with the true parameters.
    Eval(EvalArgs),
    /// Cross-validate the penalty constants of a procedure.
    Xval(XvalArgs),
    /// Full benchmark: replications x horizons x procedures.
    Experiment(ExperimentArgs),
    /// Monte Carlo check of the martingale deviation bounds.
    CheckBounds(CheckBoundsArgs),
    /// Compute data-driven penalty weights.
    Weights(WeightsArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new("config", e.to_string()))?;
    }
    let config = cli.config.as_deref();
    match cli.command {
        Command::Simulate(a) => commands::simulate(args::resolve(a, config)?),
        Command::Fit(a) => commands::fit(args::resolve(a, config)?),
        Command::Eval(a) => commands::eval(args::resolve(a, config)?),
        Command::Xval(a) => commands::xval(args::resolve(a, config)?),
        Command::Experiment(a) => commands::experiment(a, config),
        Command::CheckBounds(a) => commands::check_bounds(args::resolve(a, config)?),
        Command::Weights(a) => commands::weights(args::resolve(a, config)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            CliError::new("usage", e.render().to_string().trim()).report();
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            e.report();
            // Required values can only be checked after the config file is merged.
            if e.error == "usage" {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
