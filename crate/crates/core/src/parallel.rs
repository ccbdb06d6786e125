//! Trial-level data parallelism. With the `parallel` feature (default) the
//! map runs on the rayon pool; otherwise it degrades to a sequential loop
//! with identical output ordering.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to each input, preserving input order in the output.
#[cfg(feature = "parallel")]
pub fn map_trials<T, U, F>(inputs: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    inputs.par_iter().map(f).collect()
}

/// Applies `f` to each input, preserving input order in the output.
#[cfg(not(feature = "parallel"))]
pub fn map_trials<T, U, F>(inputs: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    inputs.iter().map(f).collect()
}
