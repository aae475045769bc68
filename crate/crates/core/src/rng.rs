//! Seeded random streams.
//!
//! Every chain and every benchmark task owns one [`RngStream`]. A stream is a
//! ChaCha8 generator keyed by the 64-bit seed and positioned on its own
//! ChaCha stream id, so two streams with the same seed never overlap.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Derive an independent stream from a list of task coordinates.
    ///
    /// The derived seed depends only on `(seed, parts)`, never on scheduling,
    /// so results do not change with the number of worker threads.
    pub fn derive(seed: u64, parts: &[u64]) -> Self {
        let mut h = splitmix64(seed ^ 0x5851_f42d_4c95_7f2d);
        for &p in parts {
            h = splitmix64(h ^ splitmix64(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        Self::new(h, parts.first().copied().unwrap_or(0))
    }

    /// Uniform draw in the open interval (0, 1).
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            // 53 random mantissa bits
            let u = (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
