//! Switch between rayon and sequential iteration.
//!
//! Call sites pass `parallel: bool`; with the `parallel` feature disabled the
//! flag is ignored and everything runs on the calling thread. Results are
//! collected in input order either way.

/// Maps `f` over `items`, in parallel when requested and available.
pub fn map_collect<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// Whether the crate was built with rayon support.
pub const fn available() -> bool {
    cfg!(feature = "parallel")
}

/// Runs `f` inside a rayon pool of `threads` workers (0 = rayon default).
/// Without the `parallel` feature this just calls `f`.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                return pool.install(f);
            }
        }
    }
    let _ = threads;
    f()
}
