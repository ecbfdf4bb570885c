//! `nlcoupler`: sweeps, fits and calibration for the transmon pair with a
//! nonlinear coupler. Exit codes: 0 success, 1 runtime failure, 2 bad config.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::{Command, Format, RunConfig};
use crate::error::{CliError, Result};
use crate::output::Provenance;

#[derive(Parser, Debug)]
#[command(name = "nlcoupler", version, about = "Spectra, couplings and calibration of a transmon pair with a nonlinear coupler")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Table format (overrides output.format).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Seed for fits and synthetic noise (overrides seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (overrides threads).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Sub {
    /// Classical normal modes against coupler flux.
    Modes,
    /// Full-Hamiltonian spectrum against coupler flux.
    Spectrum,
    /// Effective couplings against coupler flux.
    Couplings,
    /// Avoided-crossing scan in qubit 1 flux and its two-level fit.
    Crossing,
    /// Cross-Kerr observable against coupler flux.
    Kerr,
    /// Circuit-parameter fit to spectroscopy data.
    Fit,
    /// Flux-crosstalk calibration from sweetspot offsets.
    Calibrate,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Modes => Command::Modes,
            Sub::Spectrum => Command::Spectrum,
            Sub::Couplings => Command::Couplings,
            Sub::Crossing => Command::Crossing,
            Sub::Kerr => Command::Kerr,
            Sub::Fit => Command::Fit,
            Sub::Calibrate => Command::Calibrate,
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::parse("{}", "defaults", std::path::Path::new("."))?,
    };
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(format) = cli.format {
        cfg.output.format = format;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = Some(threads);
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<Vec<PathBuf>> {
    let command = Command::from(cli.command);
    let cfg = resolve(cli)?;
    cfg.validate(command)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let provenance = Provenance::new(command.name(), cfg.hash(), cfg.seed);
    let ctx = Context { cfg: &cfg, out: &cfg.output.dir, provenance };
    commands::run(command, &ctx)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
