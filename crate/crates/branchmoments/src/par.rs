//! Thin data-parallelism layer. With the `parallel` feature (default) the
//! maps run on rayon; without it they run sequentially. Both produce the
//! same `Vec` in index order, so every caller is bitwise deterministic as
//! long as work item `i` depends only on `i` (which is why all randomized
//! work derives its RNG from a per-index stream).

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Sequential fallback with the same signature and output order.
#[cfg(not(feature = "parallel"))]
pub fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Run `f` on a pool with `threads` worker threads (0 = library default).
/// Without the `parallel` feature the thread count is irrelevant and `f`
/// simply runs in place.
#[cfg(feature = "parallel")]
pub fn run_with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("failed to build thread pool");
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn run_with_threads<T: Send>(_threads: usize, f: impl FnOnce() -> T + Send) -> T {
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_index_order() {
        let v = par_map_indexed(100, |i| i * i);
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn thread_count_does_not_change_output() {
        let base = par_map_indexed(1000, |i| (i as f64).sqrt());
        let one = run_with_threads(1, || par_map_indexed(1000, |i| (i as f64).sqrt()));
        let eight = run_with_threads(8, || par_map_indexed(1000, |i| (i as f64).sqrt()));
        assert_eq!(base, one);
        assert_eq!(base, eight);
    }
}
