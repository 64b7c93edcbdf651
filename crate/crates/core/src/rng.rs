//! Seeded randomness.
//!
//! All generators are ChaCha8 (`rand_chacha::ChaCha8Rng`), whose output
//! stream is fixed by its seed on every platform. Child seeds are derived by
//! folding indices into a parent seed with the SplitMix64 finalizer, so each
//! replicate or grid cell owns an independent stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes `parent` together with an ordered list of indices.
pub fn derive_seed(parent: u64, indices: &[u64]) -> u64 {
    indices
        .iter()
        .fold(splitmix64(parent), |acc, &idx| splitmix64(acc ^ splitmix64(idx.wrapping_add(1))))
}

// Stream labels used when one replicate needs several independent draws.
pub(crate) const STREAM_SIGNAL: u64 = 0x5157;
pub(crate) const STREAM_NOISE: u64 = 0x4e01;
pub(crate) const STREAM_PHENOTYPE: u64 = 0x9e07;
