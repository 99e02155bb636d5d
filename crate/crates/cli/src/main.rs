//! Command line runner: reads a JSON experiment config, dispatches to the
//! owning module, and writes CSV/JSON artifacts plus a run manifest into a
//! deterministic run directory.
//!
//! Exit codes: 0 on success, 2 for usage or config errors, 3 for numerical
//! failures (factorization, quadrature), 4 for an inconclusive experiment.

mod commands;
mod config;
mod csvio;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sha2::{Digest, Sha256};

use crate::config::{usage, CliError, RunConfig};

/// Reproducible experiment runner for the rough volatility lab.
///
/// The config file is a single JSON object with a `command` field choosing
/// one of: kernels | sample | weak-rate | strong-rate | ppde | telescope.
/// Flags override only the seed and the output root; everything else that
/// shapes a run lives in the config file.
#[derive(Debug, Parser)]
#[command(name = "rvlab", version, about)]
struct Cli {
    /// Path to the JSON run configuration.
    config: PathBuf,
    /// Override the seed stored in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; defaults to $RVLAB_OUTPUT_ROOT, then ./runs.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("result: inconclusive");
            ExitCode::from(4)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let raw = std::fs::read(&cli.config)
        .map_err(|e| usage(format!("cannot read config {}: {e}", cli.config.display())))?;
    let mut config = RunConfig::parse(&raw)?;
    config.resolve()?;
    if let Some(seed) = cli.seed {
        config.set_seed(seed);
    }
    match config.threads() {
        Some(0) => return Err(usage("`threads` must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("thread pool: {e}")))?,
        None => {}
    }

    let root = cli
        .out
        .or_else(|| std::env::var_os("RVLAB_OUTPUT_ROOT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let digest = Sha256::digest(&raw);
    let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let dir = root.join(format!("{}-{}-{}", config.command_name(), &hash[..8], config.seed()));
    std::fs::create_dir_all(&dir)?;

    let started = manifest::now_utc();
    let outcome = commands::dispatch(&config, &dir).inspect_err(|_| {
        // A failed command must not leave an empty run directory behind;
        // remove_dir refuses non-empty ones, so artifacts from an earlier
        // successful run under the same name are safe.
        let _ = std::fs::remove_dir(&dir);
    })?;
    manifest::write(&dir, config.command_name(), &hash, config.seed(), &started, &outcome.artifacts)?;
    println!("run directory: {}", dir.display());
    println!("{}", outcome.summary);
    Ok(outcome.conclusive)
}
