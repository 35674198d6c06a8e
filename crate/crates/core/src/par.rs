//! Thin data-parallel layer.
//!
//! With the `parallel` feature these helpers dispatch to rayon; without it
//! they are ordinary sequential loops. Callers only ever produce per-item
//! values here; all sums over items happen afterwards in index order, which
//! keeps results bit-identical for any thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Evaluates `f(i)` for `i in 0..n` and collects the results in index order.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Calls `f(i, item)` on every element of `items`.
#[cfg(feature = "parallel")]
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

/// Calls `f(i, item)` on every element of `items` and collects the results in index order.
#[cfg(feature = "parallel")]
pub fn map_mut<T, R, F>(items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut T) -> R + Sync + Send,
{
    items
        .par_iter_mut()
        .enumerate()
        .map(|(i, x)| f(i, x))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_mut<T, R, F>(items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(usize, &mut T) -> R + Sync + Send,
{
    items.iter_mut().enumerate().map(|(i, x)| f(i, x)).collect()
}

/// Fills consecutive `width`-sized rows of `out` with `f(row, slice)`.
#[cfg(feature = "parallel")]
pub fn fill_rows<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    out.par_chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

#[cfg(not(feature = "parallel"))]
pub fn fill_rows<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    out.chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

/// Runs `f` on a dedicated one-thread pool, so nested parallel helpers run
/// sequentially. Used for wall-clock measurements.
#[cfg(feature = "parallel")]
pub fn single_threaded<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("failed to build a one-thread pool")
        .install(f)
}

#[cfg(not(feature = "parallel"))]
pub fn single_threaded<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    f()
}

/// Sizes the global pool. Must run before any parallel work; fails if the
/// pool was already built.
#[cfg(feature = "parallel")]
pub fn init_global_threads(threads: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

#[cfg(not(feature = "parallel"))]
pub fn init_global_threads(_threads: usize) -> Result<(), String> {
    Ok(())
}

/// Worker threads available to the parallel helpers.
#[cfg(feature = "parallel")]
pub fn current_threads() -> usize {
    rayon::current_num_threads()
}

#[cfg(not(feature = "parallel"))]
pub fn current_threads() -> usize {
    1
}

/// Sum in index order.
pub fn ordered_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |acc, x| acc + x)
}
