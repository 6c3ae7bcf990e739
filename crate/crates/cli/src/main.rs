//! Command-line front-end: runs solvers, baselines and the experiment
//! layouts on configured problems and writes traces and audit reports.

mod commands;
mod config;
mod error;
mod setup;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Options;

#[derive(Parser)]
#[command(name = "shamanskii", version, about = "Lazy-Hessian proximal Newton solvers and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver and write trace.csv, summary.txt and audit.txt.
    Solve(CommonArgs),
    /// Compare the four subproblem stopping rules against ISTA and FISTA.
    Bench(CommonArgs),
    /// Measure the order of convergence over a sweep of refresh periods.
    Order(CommonArgs),
    /// Lazy L-BFGS against proximal Newton, ISTA and FISTA.
    Compare(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat `key = value` config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress reports on stdout.
    #[arg(long)]
    quiet: bool,
}

impl From<CommonArgs> for Options {
    fn from(a: CommonArgs) -> Self {
        Options { config: a.config, out: a.out, seed: a.seed, quiet: a.quiet }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => commands::solve(&a.into()),
        Command::Bench(a) => commands::bench(&a.into()),
        Command::Order(a) => commands::order(&a.into()),
        Command::Compare(a) => commands::compare(&a.into()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
