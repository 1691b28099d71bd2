//! `dprfs`: generate star benchmark data, fit DP-RFS and baseline
//! mixtures, and evaluate fits against ground truth.
//!
//! Exit codes: 0 on success, 2 on bad input or configuration, 3 when a
//! fit hits a non-finite log-likelihood.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod error;
mod eval;
mod fit;
mod generate;
mod io;

#[derive(Debug, Parser)]
#[command(name = "dprfs", version, about = "Dirichlet process mixtures of Poisson random finite sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic star dataset as JSON Lines.
    Generate(generate::GenerateArgs),
    /// Fit dprfs, dpgmm or gmm and write trace.csv, assignments.json and summary.json.
    Fit(fit::FitArgs),
    /// Score a fit against the dataset and write metrics.json and k_trace.csv.
    Eval(eval::EvalArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => generate::run(args),
        Command::Fit(args) => fit::run(args),
        Command::Eval(args) => eval::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}
