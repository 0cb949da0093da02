//! Command-line workflows around the `klsurv` library: fitting, prediction, validation and
//! the simulation study, with JSON/CSV file formats and a provenance manifest per run.

pub mod commands;
pub mod error;
pub mod formats;
pub mod manifest;

pub use commands::{run, Cli, Command};
pub use error::{CliError, Result};

/// Environment variable that caps the worker thread count. It never changes results.
pub const THREADS_ENV: &str = "KLSURV_THREADS";

/// Sizes the global worker pool from [`THREADS_ENV`], if set.
pub fn init_thread_pool() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::input(format!("{THREADS_ENV} '{raw}' is not a positive integer")))?;
    // A pool built earlier in the process wins; that only affects speed.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
