//! Experiment front end: mesh inspection, dataset generation, training,
//! single solves, and the benchmark matrix, all driven by plain-text
//! configs.
//!
//! Exit codes: 0 success (a diverged solve is a valid experimental
//! outcome), 2 usage or configuration error, 3 runtime abort.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::CmdError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "np-newton", version, about = "Newton solvers with a learned nonlinear right-preconditioner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print node, element, and boundary-tag counts of the configured meshes.
    MeshInfo {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate the Newton-snapshot training dataset.
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Override the dataset seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the preconditioner on a generated dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one solver on one benchmark case and write its convergence CSV.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Benchmark case number (nonlinear Poisson: 1..3, elasticity: 1..2).
        #[arg(long)]
        case: u32,
        /// newton-ls | newton-tr | np-newton-ls | np-newton-tr | ic-newton-ls
        #[arg(long)]
        method: String,
        /// Override the evaluation seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Apply the preconditioner unconditionally (no discard safeguard).
        #[arg(long)]
        strict_paper: bool,
    },
    /// Run the full case x method matrix and write the summary CSV.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        strict_paper: bool,
    },
}

fn run(cli: Cli) -> Result<(), CmdError> {
    let load = |path: &PathBuf| {
        config::load_config(path).map_err(|e| CmdError::Usage(e.to_string()))
    };
    match cli.cmd {
        Cmd::MeshInfo { config } => commands::mesh_info(&load(&config)?),
        Cmd::GenData { config, seed, out } => {
            let cfg = load(&config)?;
            let out = out.unwrap_or_else(|| commands::default_out_dir(&config));
            commands::gen_data(&cfg, seed, &out)
        }
        Cmd::Train { config, out } => {
            let cfg = load(&config)?;
            let out = out.unwrap_or_else(|| commands::default_out_dir(&config));
            commands::train_cmd(&cfg, &out)
        }
        Cmd::Solve {
            config,
            case,
            method,
            seed,
            out,
            strict_paper,
        } => {
            let cfg = load(&config)?;
            let out = out.unwrap_or_else(|| commands::default_out_dir(&config));
            commands::solve_cmd(&cfg, case, &method, &out, seed, strict_paper)
        }
        Cmd::Bench {
            config,
            out,
            strict_paper,
        } => {
            let cfg = load(&config)?;
            let out = out.unwrap_or_else(|| commands::default_out_dir(&config));
            commands::bench_cmd(&cfg, &out, strict_paper)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `np-newton --help` for usage");
            ExitCode::from(2)
        }
        Err(CmdError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
