//! Rayon-backed [`Executor`]. Results are identical for every pool size
//! because the engine reduces per-sample work in index order.

use fmce_core::nn::Executor;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "FMCE_THREADS";

pub struct ThreadPool {
    pool: rayon::ThreadPool,
}

impl ThreadPool {
    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::Invalid("thread count must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Invalid(format!("cannot start thread pool: {e}")))?;
        Ok(Self { pool })
    }

    /// Uses `FMCE_THREADS` when set, else the available parallelism.
    pub fn from_env() -> Result<Self> {
        Self::new(threads_from(std::env::var(THREADS_ENV).ok().as_deref())?)
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

/// Parses an `FMCE_THREADS` value; `None` or empty means "all cores".
pub fn threads_from(value: Option<&str>) -> Result<usize> {
    match value.map(str::trim) {
        None | Some("") => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Invalid(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        },
    }
}

impl Executor for ThreadPool {
    fn map<T: Send, F: Fn(usize) -> T + Sync + Send>(&self, n: usize, f: F) -> Vec<T> {
        if self.threads() == 1 || n < 2 {
            return (0..n).map(f).collect();
        }
        self.pool.install(|| (0..n).into_par_iter().map(&f).collect())
    }
}
