//! Thin command-line front end: `run` one experiment, `sweep` a parameter
//! grid, `report` over finished runs. All logic lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use h2st::runner;
use h2st::Error;

#[derive(Parser)]
#[command(
    name = "h2st",
    about = "Hierarchical two-sample tests for continual OOD detection on open-world task streams",
    after_help = "Set H2ST_WORKERS to bound concurrent sweep cells."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run {
        /// Path to the TOML config document.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a grid of experiments with replications and aggregate metrics.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Grid spec `path=v1,v2;path2=w1,w2`, e.g.
        /// `memory.capacity_per_task=40,100,200,300`.
        #[arg(long)]
        grid: String,
        /// Replications per grid cell.
        #[arg(long)]
        reps: usize,
        /// Output directory for sweep.csv (defaults to the config's).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a strategy comparison table and emit per-round curves.
    Report {
        /// Directory holding run outputs.
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, out } => runner::run_command(&config, seed, out),
        Command::Sweep {
            config,
            grid,
            reps,
            out,
        } => runner::sweep_command(&config, &grid, reps, out),
        Command::Report { input } => runner::report_command(&input),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ (Error::ConfigParse(_) | Error::InvalidConfig(_))) => {
            eprintln!("h2st: {err}");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("h2st: {err}");
            ExitCode::from(1)
        }
    }
}
