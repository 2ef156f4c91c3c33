//! 64-bit seed derivation.
//!
//! Every random stream in an episode is keyed by a chain of small integers
//! hashed into the master seed, so adding a method or an agent never shifts
//! the streams of the others.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `tags` into `seed` one at a time.
pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(mix64(seed ^ GOLDEN), |acc, &tag| {
        mix64(acc.wrapping_add(GOLDEN).wrapping_add(mix64(tag ^ 0xD6E8_FEB8_6659_FD93)))
    })
}

// Stream tags.
pub(crate) const TAG_DATA: u64 = 0xDA7A;
pub(crate) const TAG_EPISODE: u64 = 0xE915;
pub(crate) const TAG_SPLIT: u64 = 0x5B11;
pub(crate) const TAG_PU: u64 = 0x9055;
pub(crate) const TAG_TRAIN: u64 = 0x7EA1;

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn derive_is_order_sensitive() {
        assert_ne!(derive(1, &[2, 3]), derive(1, &[3, 2]));
        assert_eq!(derive(1, &[2, 3]), derive(1, &[2, 3]));
    }

    #[test]
    fn no_collisions_on_small_grid() {
        let mut seen = HashSet::new();
        for a in 0..20u64 {
            for m in 0..4u64 {
                for t in 0..100u64 {
                    assert!(seen.insert(derive(42, &[a, m, t])));
                }
            }
        }
    }
}
