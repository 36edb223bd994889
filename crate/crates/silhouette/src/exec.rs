//! Thread-pool executor.

use rayon::prelude::*;
use rayon::{ThreadPool, ThreadPoolBuilder};
use silhouette_core::parallel::Executor;

/// Environment variable that fixes the worker count.
pub const THREADS_ENV: &str = "SILHOUETTE_THREADS";

pub struct Pool {
    pool: ThreadPool,
}

impl Pool {
    pub fn new(threads: usize) -> Self {
        let pool = ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .expect("thread pool");
        Pool { pool }
    }

    /// Sized from `SILHOUETTE_THREADS`, else rayon's default.
    pub fn from_env() -> Self {
        let n = std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(0);
        Self::new(if n == 0 { rayon::current_num_threads() } else { n })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync,
    {
        self.pool.install(|| items.par_iter().map(&f).collect())
    }
}
