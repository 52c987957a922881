//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream selected by
//! `(seed, stream index)`, so a sample's randomness is a pure function of its
//! index and never of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent seed for a named stage from a base seed.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = mix64(seed);
    for b in tag.bytes() {
        h = mix64(h ^ u64::from(b));
    }
    h
}

/// Generator for stream `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng.set_word_pos(0);
    rng
}

/// Factory that clones a keyed generator instead of re-expanding the seed.
#[derive(Clone)]
pub struct StreamFactory {
    base: ChaCha8Rng,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn get(&self, index: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(index);
        rng.set_word_pos(0);
        rng
    }

    /// `k` uniforms in `[0, 1)` from stream `index`.
    pub fn uniforms<const K: usize>(&self, index: u64) -> [f64; K] {
        let mut rng = self.get(index);
        std::array::from_fn(|_| rng.random::<f64>())
    }
}
