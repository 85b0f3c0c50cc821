//! Multi-trajectory execution. Each job owns its state and seeds, so results
//! are independent of scheduling; with the `parallel` feature (default) jobs
//! fan out over a rayon pool, otherwise they run in order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over the items, in parallel when the `parallel` feature is
/// enabled. Output order always matches input order.
pub fn run_many<T, R, F>(items: &[T], f: F) -> Vec<R>
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
        items.iter().map(f).collect()
    }
}

/// Sequential fallback, kept available unconditionally so the two execution
/// paths can be compared like for like.
pub fn run_many_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}
