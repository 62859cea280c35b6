//! Data-parallel map over independent work items.
//!
//! With the `parallel` feature (default) [`map`] runs on the rayon pool;
//! without it, it is the same sequential loop as [`map_sequential`]. Output
//! order always matches input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_sequential(items, f)
    }
}

pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

/// Whether [`map`] dispatches to rayon.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
