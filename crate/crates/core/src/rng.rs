//! Deterministic random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by the master
//! seed and a tuple of tags (purpose, sweep, chunk, ...). Work is split into
//! fixed-size chunks, each with its own stream, so results do not depend on the
//! number of threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Number of elements generated from one sub-stream.
pub const CHUNK: usize = 8192;

pub mod tag {
    pub const INIT: u64 = 1;
    pub const SWEEP: u64 = 2;
    pub const COMPOSITE: u64 = 3;
    pub const CAVITY: u64 = 4;
    pub const DIRECT: u64 = 5;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A generator for the sub-stream identified by `tags` under `seed`.
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut key = splitmix(0x5eed);
    for &t in tags {
        key = splitmix(key ^ splitmix(t));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(key);
    rng
}

/// Fills `out` in parallel, chunk `c` drawing from `substream(seed, tags ++ [c])`.
pub fn par_fill<F>(out: &mut [f64], seed: u64, tags: &[u64], f: F)
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, chunk)| {
        let mut key = tags.to_vec();
        key.push(c as u64);
        let mut rng = substream(seed, &key);
        for x in chunk.iter_mut() {
            *x = f(&mut rng);
        }
    });
}

/// Uniform index in `0..n`.
#[inline]
pub fn index<R: Rng>(rng: &mut R, n: usize) -> usize {
    rng.gen_range(0..n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_tags_give_equal_streams() {
        let mut a = substream(7, &[1, 2]);
        let mut b = substream(7, &[1, 2]);
        for _ in 0..100 {
            assert_eq!(a.gen::<u64>(), b.gen::<u64>());
        }
    }

    #[test]
    fn different_tags_differ() {
        let mut a = substream(7, &[1, 2]);
        let mut b = substream(7, &[2, 1]);
        assert_ne!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn fill_is_thread_count_independent() {
        let mut a = vec![0.0; 3 * CHUNK + 17];
        let mut b = a.clone();
        par_fill(&mut a, 3, &[9], |r| r.gen());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        pool.install(|| par_fill(&mut b, 3, &[9], |r| r.gen()));
        assert_eq!(a, b);
    }
}
