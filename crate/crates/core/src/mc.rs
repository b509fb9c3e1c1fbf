//! Deterministic parallel Monte-Carlo drivers.
//!
//! Work is split into fixed-size chunks whose streams are derived from the
//! caller's seed by chunk index. Results are gathered in index order, so the
//! output never depends on the number of worker threads.

use rayon::prelude::*;

use crate::rng::{RngSeed, StreamRng};
use crate::stats::Summary;

/// Samples per chunk. Changing this changes every MC stream.
pub const CHUNK: usize = 64;

/// Evaluates `f` for `n` samples. Sample `i` is drawn from the stream of chunk `i / CHUNK`.
pub fn sample_chunked<V, F>(seed: RngSeed, n: usize, f: F) -> Vec<V>
where
    V: Send,
    F: Fn(&mut StreamRng, usize) -> V + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let nested: Vec<Vec<V>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = seed.derive(c as u64).rng();
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n);
            (lo..hi).map(|i| f(&mut rng, i)).collect()
        })
        .collect();
    nested.into_iter().flatten().collect()
}

/// Summary of `n` scalar samples.
pub fn summarize<F>(seed: RngSeed, n: usize, f: F) -> Summary
where
    F: Fn(&mut StreamRng) -> f64 + Sync,
{
    Summary::from_values(&sample_chunked(seed, n, |rng, _| f(rng)))
}

/// One independent job per trial, each with its own derived seed.
pub fn per_trial<V, F>(seed: RngSeed, trials: usize, f: F) -> Vec<V>
where
    V: Send,
    F: Fn(RngSeed, usize) -> V + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| f(seed.derive(i as u64), i))
        .collect()
}
