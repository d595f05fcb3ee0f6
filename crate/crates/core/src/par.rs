//! Data-parallel helpers that fall back to sequential iteration when the
//! `parallel` feature is off (e.g. on wasm32).
//!
//! Only per-point maps go through here. Reductions are always performed
//! sequentially by the caller so results do not depend on the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many items the overhead of splitting work is not worth it.
#[cfg(feature = "parallel")]
const MIN_PARALLEL_LEN: usize = 4096;

pub(crate) fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if n >= MIN_PARALLEL_LEN {
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    (0..n).map(f).collect()
}

pub(crate) fn for_each_mut<T, F>(items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if items.len() >= MIN_PARALLEL_LEN {
            items.par_iter_mut().enumerate().for_each(|(i, t)| f(i, t));
            return;
        }
    }
    items.iter_mut().enumerate().for_each(|(i, t)| f(i, t));
}

/// Maps `f` over `0..n` and returns the results in index order, running
/// independent jobs concurrently when possible.
pub(crate) fn map_jobs<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        return (0..n).into_par_iter().map(f).collect();
    }
    #[allow(unreachable_code)]
    (0..n).map(f).collect()
}
