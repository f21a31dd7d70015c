//! Data-parallel execution with a sequential fallback.
//!
//! Shot loops are cut into fixed-size chunks, each with its own random stream.
//! Chunk results come back in chunk order whatever the scheduling, so merging
//! them left to right is deterministic. Without the `parallel` feature the
//! parallel mode silently degrades to the sequential loop.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Shots per chunk. Part of the reproducibility contract: changing it changes
/// which random numbers each shot sees.
pub const SHOT_CHUNK: u64 = 1 << 14;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ExecMode {
    #[default]
    Parallel,
    Sequential,
}

impl ExecMode {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_indices<T, F>(n: usize, mode: ExecMode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}

/// Runs `f(chunk, len)` for every chunk of a `shots`-long loop.
pub fn map_chunks<T, F>(shots: u64, mode: ExecMode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync + Send,
{
    let chunks = shots.div_ceil(SHOT_CHUNK);
    map_indices(chunks as usize, mode, |c| {
        let c = c as u64;
        let len = SHOT_CHUNK.min(shots - c * SHOT_CHUNK);
        f(c, len)
    })
}
