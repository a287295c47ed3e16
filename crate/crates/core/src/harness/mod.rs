//! Monte Carlo experiment engine: configuration, trials, sweeps, analytic
//! predictions over channel draws, and CSV/JSON output.

pub mod config;
pub mod emit;
pub mod engine;

pub use config::{Cell, EstimatorChoice, ExperimentConfig, Format, Grid};
pub use emit::{parse_csv, parse_json, write_csv, write_json, write_records, COLUMNS};
pub use engine::{
    aggregate, predict, predict_cell, run_cell, run_sweep, run_trial, run_trial_detailed, trial_seed, CellFailure,
    CellPrediction, SweepOutcome, SweepRecord, TrialResult,
};

use crate::error::Result;

/// Map `f` over `items` on `workers` threads, keeping input order.
#[cfg(feature = "parallel")]
pub(crate) fn parallel_map<T, R, F>(workers: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if workers <= 1 {
        return Ok(items.iter().map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| crate::Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(f).collect()))
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn parallel_map<T, R, F>(_workers: usize, items: &[T], f: F) -> Result<Vec<R>>
where
    F: Fn(&T) -> R,
{
    Ok(items.iter().map(f).collect())
}
