//! Seed derivation for reproducible parallel work.
//!
//! Every unit of work (replica, component, radius, ...) receives a seed that is
//! a pure function of the base seed and its index tuple, so results never
//! depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `base` with an index path, e.g. `derive_seed(base, &[replica, component])`.
pub fn derive_seed(base: u64, indices: &[u64]) -> u64 {
    indices.iter().fold(splitmix64(base), |acc, &idx| {
        splitmix64(acc ^ splitmix64(idx.wrapping_mul(GOLDEN_GAMMA) ^ 0x5851_f42d_4c95_7f2d))
    })
}

/// Deterministic generator used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
