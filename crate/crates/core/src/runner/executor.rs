//! Ordered parallel execution of independent work items.

use rayon::prelude::*;
use serde::Serialize;

use super::RunnerError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ItemFailure {
    pub index: usize,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct ScanOutcome<R> {
    /// One slot per item, in item order; `None` where the item failed.
    pub results: Vec<Option<R>>,
    pub failures: Vec<ItemFailure>,
}

impl<R> ScanOutcome<R> {
    pub fn successes(&self) -> impl Iterator<Item = (usize, &R)> {
        self.results.iter().enumerate().filter_map(|(i, r)| r.as_ref().map(|r| (i, r)))
    }
}

/// Runs `f` over `items` on a pool of `parallelism` threads. Results keep the
/// item order, so output does not depend on scheduling. Failures are
/// collected instead of aborting the scan.
pub fn scan_executor<I, R, E, F>(items: &[I], parallelism: usize, f: F) -> Result<ScanOutcome<R>, RunnerError>
where
    I: Sync,
    R: Send,
    E: std::fmt::Display,
    F: Fn(&I) -> Result<R, E> + Sync,
{
    if parallelism == 0 {
        return Err(RunnerError::Config("parallelism must be >= 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| RunnerError::Config(format!("thread pool: {e}")))?;
    let raw: Vec<Result<R, String>> = pool.install(|| items.par_iter().map(|it| f(it).map_err(|e| e.to_string())).collect());
    let mut results = Vec::with_capacity(raw.len());
    let mut failures = Vec::new();
    for (index, r) in raw.into_iter().enumerate() {
        match r {
            Ok(v) => results.push(Some(v)),
            Err(message) => {
                failures.push(ItemFailure { index, message });
                results.push(None);
            }
        }
    }
    Ok(ScanOutcome { results, failures })
}
