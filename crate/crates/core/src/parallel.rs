//! Bounded data parallelism for Monte Carlo loops.
//!
//! Results are always collected in index order, so the thread count never
//! changes an output.

use std::sync::OnceLock;

use rayon::prelude::*;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "STABILITY_KIT_THREADS";

pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(thread_count())
            .build()
            .expect("thread pool")
    })
}

/// `(0..n).map(f)` evaluated on the bounded pool.
pub fn par_map<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    pool().install(|| (0..n).into_par_iter().map(f).collect())
}
