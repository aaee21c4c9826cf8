//! Config-driven experiment runner for the `expval` library.
//!
//! `expval run --config path.json [--seed-override N] [--out dir]` writes
//! `<experiment>.csv` and `<experiment>_summary.json` into the output directory.
//! The worker count comes from `EXPVAL_WORKERS` (default: rayon's choice).

pub mod config;
pub mod deuteron;
pub mod error;
pub mod experiments;
pub mod vqe;

use std::path::Path;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use experiments::{Check, Outcome, Summary};

pub const WORKERS_ENV: &str = "EXPVAL_WORKERS";

pub fn worker_count() -> Result<Option<usize>, CliError> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

/// Loads, validates and runs one config on a pool of `workers` threads.
pub fn run_config(path: &Path, seed_override: Option<u64>, workers: Option<usize>) -> Result<Outcome, CliError> {
    let (mut cfg, base) = ExperimentConfig::load(path)?;
    if let Some(s) = seed_override {
        cfg.seeds = vec![s];
    }
    run_loaded(cfg, &base, workers)
}

pub fn run_loaded(cfg: ExperimentConfig, base: &Path, workers: Option<usize>) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let obs = cfg.resolve_observable(base)?;
    let state = cfg.resolve_state(&obs)?;
    let ctx = experiments::Context::new(cfg, obs, state)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    pool.install(|| experiments::run_experiment(&ctx))
}

/// Writes every table and the summary; returns the summary path.
pub fn write_outcome(outcome: &Outcome, out: &Path) -> Result<std::path::PathBuf, CliError> {
    std::fs::create_dir_all(out)?;
    for t in &outcome.tables {
        std::fs::write(out.join(&t.file_name), &t.bytes)?;
    }
    let path = out.join(format!("{}_summary.json", outcome.summary.experiment));
    let mut text = serde_json::to_string_pretty(&outcome.summary)?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}

/// 0 when every check passes, 1 otherwise.
pub fn exit_code(outcome: &Outcome) -> i32 {
    if outcome.summary.pass {
        0
    } else {
        1
    }
}
