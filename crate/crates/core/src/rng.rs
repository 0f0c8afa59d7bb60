//! Counter-based random streams.
//!
//! A path is identified by `(master seed, stream)`. Inside a path, event
//! `n` (1-based) consumes exactly two 64-bit words taken at ChaCha word
//! position `4 (n - 1)`, so any event's uniforms can be regenerated without
//! replaying the path, and replications with different streams never
//! overlap regardless of scheduling.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// ChaCha words consumed per event (two `u64` draws).
pub const WORDS_PER_EVENT: u128 = 4;

#[derive(Debug, Clone)]
pub struct PathRng {
    inner: ChaCha8Rng,
}

impl PathRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Positions the stream so that the next draw pair belongs to event `n`.
    pub fn seek_event(&mut self, n: u64) {
        let n = n.max(1) as u128;
        self.inner.set_word_pos((n - 1) * WORDS_PER_EVENT);
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn open01(&mut self) -> f64 {
        let bits = self.inner.next_u64() >> 11;
        (bits as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Unit exponential by inversion.
    #[inline]
    pub fn exp1(&mut self) -> f64 {
        -self.open01().ln()
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

/// Stream id for replication `rep` of branch `branch`; branch 0 with
/// `rep = 0` is the conventional pilot stream.
pub fn stream_id(branch: u32, rep: u32) -> u64 {
    ((branch as u64) << 32) | rep as u64
}
