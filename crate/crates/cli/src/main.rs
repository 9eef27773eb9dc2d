//! `cunning`: run the cunning-agents market model and export its statistics as CSV.

mod analysis;
mod config;
mod output;
mod simulate;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::output::OutDir;

#[derive(Parser)]
#[command(
    name = "cunning",
    version,
    about = "Three-state cunning-agents market simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides `model.seed` and `sweep.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the model; write magnetization and return series.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Histograms, CCDF, autocorrelations and fits of a return series.
    Stats {
        #[command(flatten)]
        common: Common,
        /// CSV with header `t,r`, `t,return` or `t,price`; simulates when absent.
        #[arg(long)]
        returns: Option<PathBuf>,
    },
    /// Interevent-time histograms and fitted overlays per threshold.
    Iet {
        #[command(flatten)]
        common: Common,
        /// CSV with header `t,r`, `t,return` or `t,price`; simulates when absent.
        #[arg(long)]
        returns: Option<PathBuf>,
    },
    /// Parameter sweep with resumable output and phase-diagram slices.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Discard any previous sweep output in the directory.
        #[arg(long)]
        fresh: bool,
        /// Stop after this many new simulations.
        #[arg(long)]
        limit: Option<usize>,
    },
}

fn prepare(common: &Common) -> Result<(RunConfig, OutDir)> {
    let config = RunConfig::load(&common.config)?;
    let dir = common
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .ok_or_else(|| anyhow!("no output directory: pass --out or set output.dir"))?;
    let out = OutDir::create(&dir)?;
    Ok((config, out))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let (config, mut out) = prepare(&common)?;
            simulate::cmd_simulate(&config, &mut out, common.seed)
        }
        Command::Stats { common, returns } => {
            let (config, mut out) = prepare(&common)?;
            analysis::cmd_stats(&config, &mut out, returns.as_deref(), common.seed)
        }
        Command::Iet { common, returns } => {
            let (config, mut out) = prepare(&common)?;
            analysis::cmd_iet(&config, &mut out, returns.as_deref(), common.seed)
        }
        Command::Sweep {
            common,
            fresh,
            limit,
        } => {
            let (config, mut out) = prepare(&common)?;
            sweep::cmd_sweep(&config, &mut out, common.seed, fresh, limit)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
