//! Order-preserving data-parallel map, sequential without the `parallel` feature.

/// `(0..n).map(f).collect()`, on the rayon pool when `parallel` is true and
/// the feature is compiled in. Output order never depends on scheduling.
pub fn map_range<T, F>(n: usize, parallel: bool, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = parallel;
    (0..n).map(f).collect()
}

/// Whether [`map_range`] can actually run in parallel in this build.
pub const fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}
