//! Thread pool configuration.
//!
//! Library operations use rayon's ambient pool; callers that need to cap
//! parallelism run them inside [`ThreadPool::install`].

use rayon::{ThreadPool, ThreadPoolBuilder};

use crate::error::{Error, Result};

/// Environment variable capping worker threads. `0` or unset means automatic.
pub const THREADS_ENV: &str = "STOCKPOT_THREADS";

pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(raw) if raw.trim().is_empty() => Ok(0),
        Ok(raw) => raw.trim().parse::<usize>().map_err(|_| {
            Error::invalid(format!(
                "{THREADS_ENV} must be a non-negative integer, got `{raw}`"
            ))
        }),
        Err(_) => Ok(0),
    }
}

pub fn build_pool(threads: usize) -> Result<ThreadPool> {
    ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))
}
