//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded with a
//! 64-bit value derived from the run's master seed, so results never depend
//! on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed number `index` of `parent`.
pub fn split(parent: u64, index: u64) -> u64 {
    mix64(parent ^ mix64(index.wrapping_add(0x6A09_E667_F3BC_C908)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn children_are_distinct() {
        let seeds: HashSet<u64> = (0..1000).map(|k| split(42, k)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(split(1, 0), split(2, 0));
        assert_eq!(split(7, 3), split(7, 3));
    }
}
