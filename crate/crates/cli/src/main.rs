mod config;
mod output;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Task;
use output::{emit_error, OutputDir};

/// Eigenvalues, travelling waves and simulations for a population
/// structured by space and trait under an environmental cline.
#[derive(Parser)]
#[command(name = "clinewave", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Principal eigenvalues, classification and the minimal speed.
    Eigen(TaskArgs),
    /// Travelling-wave profiles (minimal-speed ladder or fast waves).
    Wave(TaskArgs),
    /// Time-dependent runs measuring spreading speed or extinction rate.
    Simulate(TaskArgs),
    /// Phase-diagram sweep over the (A, B) lattice.
    Sweep(TaskArgs),
}

#[derive(clap::Args)]
struct TaskArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for summary.json and CSV artifacts.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, args) = match &cli.command {
        Command::Eigen(a) => (Task::Eigen, a),
        Command::Wave(a) => (Task::Wave, a),
        Command::Simulate(a) => (Task::Simulate, a),
        Command::Sweep(a) => (Task::Sweep, a),
    };

    let out = match OutputDir::create(&args.out) {
        Ok(out) => out,
        Err(e) => {
            emit_error(None, "output", &format!("{e:#}"));
            return ExitCode::FAILURE;
        }
    };
    let cfg = match config::load(&args.config, task) {
        Ok(cfg) => cfg,
        Err(e) => {
            emit_error(Some(&args.out), "config", &format!("{e:#}"));
            return ExitCode::FAILURE;
        }
    };
    match tasks::dispatch(task, &cfg, &out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            emit_error(Some(&args.out), "solver", &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
