//! Order-deterministic parallel trial execution.
//!
//! Trials run on a bounded rayon pool and are collected by trial index, so the
//! merged result does not depend on how many workers ran them. Randomness must
//! come from [`crate::rng::stream`] keyed by the trial index.

use rayon::prelude::*;

use crate::{HrisError, Result};

/// Experiment ids used as the second coordinate of every random stream.
pub mod experiment_id {
    pub const AOA_RMSE: u64 = 1;
    pub const CHEST_TRADEOFF: u64 = 2;
    pub const RF_CHAIN_SWEEP: u64 = 3;
    pub const BEAMPATTERN: u64 = 4;
}

/// Worker count; `0` lets rayon pick one thread per core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Workers(pub usize);

impl Workers {
    pub const AUTO: Workers = Workers(0);

    pub fn pool(self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.0)
            .build()
            .map_err(|e| HrisError::Parameter(format!("cannot start worker pool: {e}")))
    }

    pub fn resolved(self) -> usize {
        if self.0 == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.0
        }
    }
}

/// Runs `trial(i)` for `i in 0..n_trials` and returns the outputs in index order.
pub fn run_trials<R, F>(n_trials: usize, workers: Workers, trial: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    let pool = workers.pool()?;
    Ok(pool.install(|| (0..n_trials).into_par_iter().map(&trial).collect()))
}

/// Like [`run_trials`] but stops at the first error (lowest failing index wins).
pub fn try_run_trials<R, F>(n_trials: usize, workers: Workers, trial: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize) -> Result<R> + Sync + Send,
{
    run_trials(n_trials, workers, trial)?.into_iter().collect()
}

/// Sequential mean, so the summation order is fixed.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}
