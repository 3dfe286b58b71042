//! Seeded randomness. Every stochastic stage draws from a [`SeededRng`]
//! derived from one global seed, so stages are reproducible on their own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent per-stage seed from a parent seed and a stage tag.
pub fn derive_seed(parent: u64, stage: &str) -> u64 {
    let mut h = splitmix64(parent);
    for b in stage.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

pub fn derive_seed_n(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}
