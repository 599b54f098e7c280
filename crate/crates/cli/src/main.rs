//! `wellcap`: batch pipeline for small-area well-capacity estimation.
//!
//! Exit codes: 0 on success, 1 when a strict fit fails its diagnostics
//! gate, 2 on usage or I/O errors.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{FitArgs, Outcome, PreprocessArgs, ReportArgs, SimulateArgs};

#[derive(Parser)]
#[command(
    name = "wellcap",
    about = "Bayesian small-area estimation of well production capacities",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a well CSV and write the model-ready dataset JSON.
    Preprocess(PreprocessArgs),
    /// Generate a synthetic well CSV plus the truths behind it.
    Simulate(SimulateArgs),
    /// Fit a model to a prepared dataset and write draws + manifest.
    Fit(FitArgs),
    /// Turn a dataset and draws into tables, checks, and trajectories.
    Report(ReportArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Preprocess(args) => commands::run_preprocess(args),
        Command::Simulate(args) => commands::run_simulate(args),
        Command::Fit(args) => commands::run_fit(args),
        Command::Report(args) => commands::run_report(args),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::DiagnosticsFailed) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
