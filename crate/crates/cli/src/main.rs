//! `shiftexit`: Monte Carlo estimates for diffusions stopped at a domain
//! boundary, with and without the boundary-shift correction.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::CliError;
use config::{Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "shiftexit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Estimate the functional at one start point for each step size and mode.
    Estimate(Overrides),
    /// Errors over a list of step sizes, with a log-log slope fit per mode.
    Convergence(Overrides),
    /// Empirical law of the normalized overshoot against the ladder limit law.
    Overshoot(Overrides),
    /// Monte Carlo estimate of c0 from Gaussian random walk ladder heights.
    Ladder(Overrides),
    /// Run a preset experiment and print its summary table.
    Preset(Overrides),
}

fn execute(cli: Cli) -> Result<String, CliError> {
    let (command, overrides) = match cli.command {
        Sub::Estimate(o) => (Command::Estimate, o),
        Sub::Convergence(o) => (Command::Convergence, o),
        Sub::Overshoot(o) => (Command::Overshoot, o),
        Sub::Ladder(o) => (Command::Ladder, o),
        Sub::Preset(o) => (Command::Preset, o),
    };
    let cfg = RunConfig::resolve(command, &overrides.merged()?)?;
    match cfg.workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| config::ConfigError::new("workers", e.to_string()))?;
            pool.install(|| commands::run(&cfg))
        }
        None => commands::run(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("shiftexit: error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code())
        }
    }
}
