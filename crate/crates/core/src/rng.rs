//! Reproducible random streams.
//!
//! A stream is identified by `(master_seed, stream_id)`. The master seed keys
//! a ChaCha20 generator and the stream id selects its 64-bit stream counter,
//! so two streams with different ids never share keystream material and any
//! stream can be reconstructed without replaying the others.
//!
//! Child streams are derived by folding tags into the stream id with the
//! SplitMix64 finalizer (see [`mix`]). The mapping is part of the on-disk
//! reproducibility contract: changing it changes every CSV the harness emits.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// SplitMix64 finalizer applied to `state + tag * golden_gamma`.
pub fn mix(state: u64, tag: u64) -> u64 {
    let mut z = state
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A deterministic random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            rng,
        }
    }

    /// Independent stream under the same master seed, addressed by a tag path.
    pub fn derive(&self, tags: &[u64]) -> Self {
        let id = tags.iter().fold(self.stream_id, |acc, &t| mix(acc, t));
        Self::new(self.master_seed, id)
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
