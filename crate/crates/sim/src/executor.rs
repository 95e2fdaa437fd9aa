//! Thread-pool execution of per-path work.

use lsw_core::estimators::PathExecutor;
use rayon::prelude::*;

/// Distributes paths over a fixed number of worker threads; results come
/// back in path order whatever the scheduling.
#[derive(Debug)]
pub struct Parallel {
    pool: rayon::ThreadPool,
}

impl Parallel {
    pub fn new(workers: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("thread pool");
        Parallel { pool }
    }

    /// One worker per available hardware thread.
    pub fn with_available_parallelism() -> Self {
        Self::new(default_workers())
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl PathExecutor for Parallel {
    fn map_paths<T, F>(&self, n_paths: usize, work: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        self.pool
            .install(|| (0..n_paths as u64).into_par_iter().map(&work).collect())
    }
}
