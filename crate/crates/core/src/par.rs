//! Order-preserving map that runs on the rayon pool when the `parallel`
//! feature is on and the caller asks for it, and sequentially otherwise.

/// Whether parallel execution is compiled in.
pub const AVAILABLE: bool = cfg!(feature = "parallel");

pub fn map_collect<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel && items.len() > 1 {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// Runs `f` on a dedicated pool of `threads` workers (0 = rayon default).
/// Without the `parallel` feature this just calls `f`.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if threads != 1 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            return pool.install(f);
        }
    }
    let _ = threads;
    f()
}
