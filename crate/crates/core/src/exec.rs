//! Chunked execution of Monte Carlo sweeps.
//!
//! A sweep maps each RNG chunk to an accumulator; accumulators are returned
//! in chunk order so the caller can fold them deterministically. The parallel
//! path (feature `parallel`, on by default) distributes chunks across a
//! rayon pool; because chunk boundaries are fixed by [`crate::rng::CHUNK_SIZE`]
//! and the fold order is fixed, both paths produce bit-identical results.

use crate::rng::{chunk_range, n_chunks};
use std::ops::Range;

/// Runs `f` once per chunk, sequentially. Always available; used directly by
/// benchmarks and as the fallback when the `parallel` feature is off.
pub fn run_chunks_seq<A, F>(m: usize, f: F) -> Vec<A>
where
    F: Fn(usize, Range<usize>) -> A + Sync,
    A: Send,
{
    (0..n_chunks(m)).map(|c| f(c, chunk_range(c, m))).collect()
}

/// Runs `f` once per chunk on the rayon pool, preserving chunk order.
#[cfg(feature = "parallel")]
pub fn run_chunks_par<A, F>(m: usize, f: F) -> Vec<A>
where
    F: Fn(usize, Range<usize>) -> A + Sync,
    A: Send,
{
    use rayon::prelude::*;
    (0..n_chunks(m))
        .into_par_iter()
        .map(|c| f(c, chunk_range(c, m)))
        .collect()
}

/// Runs `f` once per chunk using the configured execution path.
pub fn run_chunks<A, F>(m: usize, f: F) -> Vec<A>
where
    F: Fn(usize, Range<usize>) -> A + Sync,
    A: Send,
{
    #[cfg(feature = "parallel")]
    {
        run_chunks_par(m, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_chunks_seq(m, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, CHUNK_SIZE};
    use rand::Rng;

    fn chunk_sum(seed: u64, _c: usize, r: Range<usize>) -> f64 {
        let mut rng = substream(seed, crate::rng::domain::GENERIC, r.start as u64);
        r.map(|_| rng.random::<f64>()).sum()
    }

    #[test]
    fn chunk_order_is_preserved() {
        let m = 3 * CHUNK_SIZE + 100;
        let out = run_chunks(m, |c, _| c);
        assert_eq!(out, vec![0, 1, 2, 3]);
    }

    #[test]
    fn default_path_matches_sequential_bit_for_bit() {
        let m = 2 * CHUNK_SIZE + 1234;
        let a: Vec<f64> = run_chunks(m, |c, r| chunk_sum(9, c, r));
        let b: Vec<f64> = run_chunks_seq(m, |c, r| chunk_sum(9, c, r));
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
