//! Worker pool for per-patch maps and forest training.

use pcdim_core::forest::{Executor, Tree};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "PCDIM_WORKERS";

pub struct Workers {
    pool: rayon::ThreadPool,
}

impl Workers {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Usage("--workers must be >= 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .thread_name(|i| format!("pcdim-worker-{i}"))
            .build()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
        Ok(Self { pool })
    }

    pub fn single() -> Self {
        Self::new(1).expect("one worker")
    }

    pub fn count(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Order-preserving parallel map.
    pub fn map<T: Sync, U: Send>(&self, items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
        self.pool.install(|| items.par_iter().map(f).collect())
    }

    /// Order-preserving parallel map that stops at the first error.
    pub fn try_map<T: Sync, U: Send, E: Send>(
        &self,
        items: &[T],
        f: impl Fn(&T) -> std::result::Result<U, E> + Sync + Send,
    ) -> std::result::Result<Vec<U>, E> {
        self.pool.install(|| items.par_iter().map(f).collect())
    }
}

impl Executor for Workers {
    fn map_trees(&self, n: usize, job: &(dyn Fn(usize) -> Tree + Sync)) -> Vec<Tree> {
        self.pool.install(|| (0..n).into_par_iter().map(job).collect())
    }
}
