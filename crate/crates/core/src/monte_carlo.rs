//! Path batches. Each path gets the stream `(master_seed, index)`; results
//! come back in index order regardless of how workers interleave, so any
//! reduction over them is bit-exact.

use rayon::prelude::*;

use crate::error::Result;
use crate::rng::StreamSpec;

pub fn map_paths<T, F>(n_paths: usize, master_seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(StreamSpec) -> T + Sync + Send,
{
    (0..n_paths)
        .into_par_iter()
        .map(|i| f(StreamSpec::new(master_seed, i as u64)))
        .collect()
}

/// As [`map_paths`], stopping at the first error (lowest index wins).
pub fn try_map_paths<T, F>(n_paths: usize, master_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(StreamSpec) -> Result<T> + Sync + Send,
{
    map_paths(n_paths, master_seed, f).into_iter().collect()
}
