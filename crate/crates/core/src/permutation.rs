//! Keyed permutation of `[0, 2^n)`.
//!
//! An unbalanced Feistel network: the input splits into a high half of
//! `ceil(n/2)` bits and a low half of `floor(n/2)` bits. Each round computes
//! `(L, R) -> (R, L ^ F(key, round, R))`, truncating the round output to the
//! width of `L`, so the two half-widths swap every round. After an even
//! number of rounds the split is back where it started. The round function
//! is [`mix3`](crate::mixing::mix3).

use crate::error::GameError;
use crate::mixing::{mask, mix3};

pub const ROUNDS: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KeyedPermutation {
    width: u32,
    key: u64,
}

impl KeyedPermutation {
    pub fn new(width: u32, key: u64) -> Result<Self, GameError> {
        if width == 0 || width > 64 {
            return Err(GameError::Config(format!("permutation width {width} outside 1..=64")));
        }
        Ok(Self { width, key })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    fn check(&self, x: u64) -> Result<(), GameError> {
        if x > mask(self.width) {
            return Err(GameError::Domain { value: x, width: self.width });
        }
        Ok(())
    }

    pub fn forward(&self, x: u64) -> Result<u64, GameError> {
        self.check(x)?;
        Ok(self.forward_unchecked(x))
    }

    pub fn inverse(&self, y: u64) -> Result<u64, GameError> {
        self.check(y)?;
        Ok(self.inverse_unchecked(y))
    }

    pub(crate) fn forward_unchecked(&self, x: u64) -> u64 {
        let (mut lw, mut rw) = (self.width - self.width / 2, self.width / 2);
        let mut left = if rw == 64 { 0 } else { x >> rw };
        let mut right = x & mask(rw);
        for round in 0..ROUNDS {
            let f = mix3(self.key, round, right) & mask(lw);
            let next_right = left ^ f;
            left = right;
            right = next_right;
            std::mem::swap(&mut lw, &mut rw);
        }
        join(left, right, rw)
    }

    pub(crate) fn inverse_unchecked(&self, y: u64) -> u64 {
        let (mut lw, mut rw) = (self.width - self.width / 2, self.width / 2);
        let mut left = if rw == 64 { 0 } else { y >> rw };
        let mut right = y & mask(rw);
        for round in (0..ROUNDS).rev() {
            // (left, right) = (R, L ^ F(R)); recover (L, R).
            let prev_right = left;
            let prev_left = right ^ (mix3(self.key, round, prev_right) & mask(rw));
            left = prev_left;
            right = prev_right;
            std::mem::swap(&mut lw, &mut rw);
        }
        join(left, right, rw)
    }
}

#[inline]
fn join(left: u64, right: u64, right_width: u32) -> u64 {
    if right_width >= 64 {
        right
    } else {
        (left << right_width) | right
    }
}

/// Randomized address layout `x -> F_layout(x) ^ slide`.
///
/// The Feistel part scrambles the layout; the XOR slide makes the preimage of
/// any fixed address uniform over slides, so `slide` alone carries the
/// layout's `n` bits of secrecy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AddressLayout {
    perm: KeyedPermutation,
    slide: u64,
}

impl AddressLayout {
    pub fn new(width: u32, layout_key: u64, slide: u64) -> Result<Self, GameError> {
        let perm = KeyedPermutation::new(width, layout_key)?;
        perm.check(slide)?;
        Ok(Self { perm, slide })
    }

    pub fn forward(&self, x: u64) -> Result<u64, GameError> {
        Ok(self.perm.forward(x)? ^ self.slide)
    }

    pub fn inverse(&self, y: u64) -> Result<u64, GameError> {
        self.perm.inverse(y ^ self.slide)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_bijection(width: u32, key: u64) {
        let p = KeyedPermutation::new(width, key).unwrap();
        let size = 1usize << width;
        let mut seen = vec![false; size];
        for x in 0..size as u64 {
            let y = p.forward(x).unwrap();
            assert!(!seen[y as usize], "collision at width {width}");
            seen[y as usize] = true;
            assert_eq!(p.inverse(y).unwrap(), x);
        }
    }

    #[test]
    fn bijective_on_small_domains() {
        for width in [1, 2, 3, 4, 5, 8, 12, 16] {
            for key in [0, 1, 0xdead_beef, u64::MAX] {
                assert_bijection(width, key);
            }
        }
    }

    #[test]
    fn round_trip_wide_domains() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for width in [17, 31, 32, 33, 48, 63, 64] {
            let p = KeyedPermutation::new(width, rng.random()).unwrap();
            for _ in 0..2000 {
                let x = rng.random::<u64>() & mask(width);
                let y = p.forward(x).unwrap();
                assert!(y <= mask(width));
                assert_eq!(p.inverse(y).unwrap(), x);
            }
        }
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let p = KeyedPermutation::new(8, 3).unwrap();
        assert!(matches!(p.forward(256), Err(GameError::Domain { value: 256, width: 8 })));
        assert!(p.inverse(1 << 20).is_err());
        assert!(KeyedPermutation::new(0, 1).is_err());
        assert!(KeyedPermutation::new(65, 1).is_err());
    }

    #[test]
    fn distinct_keys_give_distinct_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (k1, k2): (u64, u64) = (rng.random(), rng.random());
            let (p1, p2) = (KeyedPermutation::new(8, k1).unwrap(), KeyedPermutation::new(8, k2).unwrap());
            assert!((0..256).any(|x| p1.forward(x).unwrap() != p2.forward(x).unwrap()));
        }
    }

    fn fisher_yates(size: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
        let mut v: Vec<u64> = (0..size as u64).collect();
        for i in (1..size).rev() {
            let j = rng.random_range(0..=i);
            v.swap(i, j);
        }
        v
    }

    // Shuffle oracle for distribution sanity: fixed-point counts and the
    // image of a single point should look like those of a uniform shuffle.
    #[test]
    fn statistics_resemble_uniform_shuffle() {
        let width = 8;
        let size = 1usize << width;
        let trials = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (mut fixed_feistel, mut fixed_shuffle) = (0u64, 0u64);
        let mut image_of_zero = vec![0u64; size];
        for _ in 0..trials {
            let p = KeyedPermutation::new(width, rng.random()).unwrap();
            fixed_feistel += (0..size as u64).filter(|&x| p.forward(x).unwrap() == x).count() as u64;
            image_of_zero[p.forward(0).unwrap() as usize] += 1;
            let s = fisher_yates(size, &mut rng);
            fixed_shuffle += s.iter().enumerate().filter(|(i, &v)| *i as u64 == v).count() as u64;
        }
        let mean_f = fixed_feistel as f64 / trials as f64;
        let mean_s = fixed_shuffle as f64 / trials as f64;
        // Both are ~1 with standard error ~1/sqrt(4000).
        assert!((mean_f - 1.0).abs() < 0.1, "feistel fixed points {mean_f}");
        assert!((mean_s - 1.0).abs() < 0.1, "shuffle fixed points {mean_s}");

        let expected = trials as f64 / size as f64;
        let chi2: f64 = image_of_zero.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 255 degrees of freedom; 99.9% quantile is about 330.
        assert!(chi2 < 330.0, "chi-square {chi2}");
    }

    #[test]
    fn layout_preimage_is_uniform_over_slides() {
        let width = 6;
        let valid: Vec<u64> = (0..5).collect();
        for layout_key in [0, 99, u64::MAX] {
            for y in 0..(1u64 << width) {
                let hits = (0..(1u64 << width))
                    .filter(|&s| valid.contains(&AddressLayout::new(width, layout_key, s).unwrap().inverse(y).unwrap()))
                    .count();
                assert_eq!(hits, valid.len());
            }
        }
        let l = AddressLayout::new(8, 5, 0x3c).unwrap();
        for x in 0..256 {
            assert_eq!(l.inverse(l.forward(x).unwrap()).unwrap(), x);
        }
    }
}
