//! Thread-count control. Parallel sections partition work by item and merge
//! results in item order, so outputs never depend on the thread count.

use rayon::ThreadPool;

/// Caps internal parallelism. Never changes results.
pub const THREADS_ENV: &str = "DETSEED_THREADS";

/// Thread count from `DETSEED_THREADS`, falling back to available parallelism.
pub fn configured_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn pool(threads: usize) -> ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("failed to build thread pool")
}

/// Runs `f` on a pool sized by [`configured_threads`].
pub fn install<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    pool(configured_threads()).install(f)
}
