//! Sample-level parallelism with a sequential fallback.
//!
//! Experiments map independent `(sample, level)` tasks through
//! [`map_indexed`]; with the default `parallel` feature this uses rayon,
//! without it a plain loop. Results come back in index order either way, so
//! downstream folds are bitwise identical across thread counts.

/// Applies `f` to `0..count`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

/// Applies `f` to `0..count`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..count).map(f).collect()
}

/// Always-sequential variant; the bench suite uses it as the baseline the
/// parallel path is compared against.
pub fn map_indexed_seq<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}
