//! 64-bit integer mixing.
//!
//! `mix64` is the SplitMix64 finalizer (Stafford variant 13). `mix3` folds
//! a key, a tweak (round index, trial index) and a value through it twice:
//!
//! ```text
//! mix3(key, tweak, value) = mix64(mix64(key + GOLDEN * (tweak + 1)) ^ value)
//! ```
//!
//! It is the round function of the keyed address permutation and the
//! trial-seed derivation of the simulation harness.

pub const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
pub fn mix3(key: u64, tweak: u64, value: u64) -> u64 {
    let k = mix64(key.wrapping_add(GOLDEN.wrapping_mul(tweak.wrapping_add(1))));
    mix64(k ^ value)
}

/// Seed of the `index`-th independent stream derived from `base`.
#[inline]
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix3(base, index, 0x5eed)
}

/// Low `width` bits set.
#[inline]
pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of SplitMix64 seeded with 0: mix64(state += GOLDEN).
        assert_eq!(mix64(GOLDEN), 0xe220_a839_7b1d_cdaf);
        assert_eq!(mix64(GOLDEN.wrapping_mul(2)), 0x6e78_9e6a_a1b9_65f4);
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 10_000);
    }

    #[test]
    fn mask_edges() {
        assert_eq!(mask(0), 0);
        assert_eq!(mask(8), 0xff);
        assert_eq!(mask(64), u64::MAX);
    }
}
