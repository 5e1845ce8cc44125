//! Counter-based random streams.
//!
//! Every simulated path owns one [`RngStream`] keyed by `(master_seed,
//! stream_id)`. The stream is a ChaCha8 keystream: the key is expanded from
//! the master seed and the 64-bit ChaCha stream word is the stream id, so the
//! draws of path `k` never depend on how many other paths exist or on which
//! worker thread produced them.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a stream id together with a list of tags into a new stream id.
fn mix_stream(stream_id: u64, tags: &[u64]) -> u64 {
    let mut state = stream_id ^ 0x5bd1_e995_7f4a_7c15;
    let mut out = splitmix64(&mut state);
    for &tag in tags {
        state ^= out ^ tag.wrapping_mul(GOLDEN);
        out = splitmix64(&mut state);
    }
    out
}

/// A deterministic random stream owned by exactly one worker.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

/// Builds the stream for `(master_seed, stream_id)`.
pub fn derive_stream(master_seed: u64, stream_id: u64) -> RngStream {
    RngStream::new(master_seed, stream_id)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = master_seed;
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            inner,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Number of 32-bit words consumed so far.
    pub fn draws(&self) -> u128 {
        self.inner.get_word_pos()
    }

    /// Independent child stream identified by `tags`. The child does not
    /// consume anything from `self`, so deriving children in any order
    /// leaves every stream unchanged.
    pub fn substream(&self, tags: &[u64]) -> RngStream {
        RngStream::new(self.master_seed, mix_stream(self.stream_id, tags))
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform_open0(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Standard exponential variate.
    pub fn exp1(&mut self) -> f64 {
        -self.uniform_open0().ln()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rayon::prelude::*;

    #[test]
    fn same_key_same_sequence() {
        let mut a = derive_stream(42, 0);
        let mut b = derive_stream(42, 0);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn distinct_streams_differ() {
        let mut a = derive_stream(42, 0);
        let mut b = derive_stream(42, 1);
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn parallel_schedule_is_bitwise_identical() {
        let serial: Vec<[u64; 3]> = (0..64u64)
            .map(|id| {
                let mut s = derive_stream(42, id);
                [s.uniform(), s.uniform(), s.uniform()].map(f64::to_bits)
            })
            .collect();
        let parallel: Vec<[u64; 3]> = (0..64u64)
            .into_par_iter()
            .map(|i| {
                let mut s = derive_stream(42, 63 - i);
                [s.uniform(), s.uniform(), s.uniform()].map(f64::to_bits)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        assert_eq!(serial, parallel);
        assert_eq!(serial[7], {
            let mut s = derive_stream(42, 7);
            [s.uniform(), s.uniform(), s.uniform()].map(f64::to_bits)
        });
    }

    #[test]
    fn streams_are_uncorrelated() {
        let n = 100_000;
        let mut a = derive_stream(42, 0);
        let mut b = derive_stream(42, 1);
        let xs: Vec<f64> = (0..n).map(|_| a.uniform()).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.uniform()).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in xs.iter().zip(&ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx).powi(2);
            syy += (y - my).powi(2);
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!(corr.abs() <= 3.0 / (n as f64).sqrt(), "corr = {corr}");
    }

    #[test]
    fn substreams_leave_parent_untouched() {
        let mut parent = derive_stream(9, 3);
        let _child = parent.substream(&[1, 2]);
        let mut fresh = derive_stream(9, 3);
        assert_eq!(parent.next_u64(), fresh.next_u64());
        let mut c1 = parent.substream(&[1, 2]);
        let mut c2 = parent.substream(&[2, 1]);
        assert_ne!(c1.next_u64(), c2.next_u64());
    }

    #[test]
    fn uniform_ranges() {
        let mut s = derive_stream(1, 1);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
            let v = s.uniform_open0();
            assert!(v > 0.0 && v <= 1.0);
            assert!(s.exp1().is_finite());
        }
    }
}
