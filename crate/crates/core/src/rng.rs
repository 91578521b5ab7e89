//! Per-trajectory random streams.
//!
//! Every trajectory owns a ChaCha8 stream keyed by `(base_seed,
//! stream_index)`. ChaCha is counter based, so streams with different
//! indices never overlap and a trajectory's draws depend only on its own
//! key, not on which thread runs it or in what order.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub base_seed: u64,
    pub stream_index: u64,
}

impl RandomStream {
    pub fn new(base_seed: u64, stream_index: u64) -> Self {
        Self {
            base_seed,
            stream_index,
        }
    }

    pub fn rng(&self) -> TrajectoryRng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.base_seed);
        inner.set_stream(self.stream_index);
        TrajectoryRng { inner }
    }
}

/// Uniform draws on the open interval `(0, 1)`.
#[derive(Debug, Clone)]
pub struct TrajectoryRng {
    inner: ChaCha8Rng,
}

impl TrajectoryRng {
    /// `(k + 0.5) / 2^53` for a random 53-bit `k`; never returns 0 or 1.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        let k = self.inner.next_u64() >> 11;
        (k as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Number of 64-bit words consumed so far.
    pub fn words_used(&self) -> u128 {
        self.inner.get_word_pos() / 2
    }
}
