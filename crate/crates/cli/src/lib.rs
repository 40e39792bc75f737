//! Experiment harness around `ctmc-lab`: JSON configs, single runs with
//! JSONL records, CSV sweeps and log-log slope fits.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod fit;
pub mod run;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{CliError, ConfigError};
pub use fit::{fit_csv, fit_log_log, SlopeFit};
pub use run::{cli_run, execute, RunReport};
pub use sweep::{cli_sweep, SweepSpec};

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "CTMC_LAB_THREADS";

/// Sizes the global rayon pool from `CTMC_LAB_THREADS`, if set.
pub fn init_thread_pool() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Input(format!("{THREADS_ENV}={raw} is not a positive integer")))?;
    // a second initialization (e.g. in tests) keeps the existing pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}
