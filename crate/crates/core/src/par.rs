//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these run on rayon's global pool;
//! without it they are plain iterators. Results are always returned in index
//! order, so callers get the same output regardless of thread count.

/// Whether work is actually spread across threads.
pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Number of worker threads in use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

/// Caps the global pool at `n` threads. Only the first call has an effect.
pub fn init_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}

/// `(0..count).map(f)` collected in order.
#[cfg(feature = "parallel")]
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<U, F>(count: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..count).map(f).collect()
}

/// `data.iter().map(f)` collected in order.
#[cfg(feature = "parallel")]
pub fn map<T, U, F>(data: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    data.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, U, F>(data: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    data.iter().map(f).collect()
}

/// Runs `f(row_index, row)` over consecutive `width`-sized rows of `out`.
#[cfg(feature = "parallel")]
pub fn for_each_row<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    use rayon::prelude::*;
    out.par_chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}

#[cfg(not(feature = "parallel"))]
pub fn for_each_row<F>(out: &mut [f64], width: usize, f: F)
where
    F: Fn(usize, &mut [f64]),
{
    out.chunks_mut(width)
        .enumerate()
        .for_each(|(i, row)| f(i, row));
}
