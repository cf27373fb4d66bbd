//! Arbitrary-precision helpers for probabilities.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

pub fn pow2(k: u32) -> BigUint {
    BigUint::one() << k as usize
}

pub fn ratio(num: impl Into<BigUint>, den: impl Into<BigUint>) -> BigRational {
    BigRational::new(num.into().into(), den.into().into())
}

pub fn log2_biguint(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 64 {
        return (x.to_u64().expect("fits in 64 bits") as f64).log2();
    }
    let shift = bits - 64;
    let top = (x >> shift as usize).to_u64().expect("fits in 64 bits");
    (top as f64).log2() + shift as f64
}

/// log2 of a non-negative rational.
pub fn log2_rational(r: &BigRational) -> f64 {
    let (num, den) = (r.numer().magnitude(), r.denom().magnitude());
    if num.is_zero() {
        return f64::NEG_INFINITY;
    }
    // Compare on aligned 64-bit mantissas so values near 1 keep precision.
    let (nb, db) = (num.bits() as i64, den.bits() as i64);
    let top = |x: &BigUint, b: i64| -> f64 {
        if b <= 64 {
            (x.to_u64().unwrap() as f64) * 2f64.powi((64 - b) as i32)
        } else {
            (x >> (b - 64) as usize).to_u64().unwrap() as f64
        }
    };
    let (tn, td) = (top(num, nb), top(den, db));
    (nb - db) as f64 + (tn / td).log2()
}

/// `sum_{j=lo}^{hi-1} 1/(big - j)` as an unreduced fraction, by binary splitting.
pub fn reciprocal_sum(big: &BigUint, lo: u64, hi: u64) -> (BigUint, BigUint) {
    if hi - lo == 1 {
        return (BigUint::one(), big - BigUint::from(lo));
    }
    let mid = lo + (hi - lo) / 2;
    let (p1, d1) = reciprocal_sum(big, lo, mid);
    let (p2, d2) = reciprocal_sum(big, mid, hi);
    (p1 * &d2 + p2 * &d1, d1 * d2)
}

pub fn rational_to_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    #[test]
    fn log2_of_powers_and_ratios() {
        assert_eq!(log2_biguint(&pow2(331)), 331.0);
        assert_eq!(log2_rational(&ratio(1u32, pow2(331))), -331.0);
        let near_one = ratio(pow2(40) - BigUint::one(), pow2(40));
        let want = (1.0 - 2f64.powi(-40)).log2();
        assert!((log2_rational(&near_one) - want).abs() < 1e-15);
        assert_eq!(log2_rational(&BigRational::zero()), f64::NEG_INFINITY);
    }

    #[test]
    fn reciprocal_sum_matches_direct() {
        let big = BigUint::from(256u32);
        let (p, d) = reciprocal_sum(&big, 1, 65);
        let fast = BigRational::new(BigInt::from(p), BigInt::from(d));
        let mut slow = BigRational::zero();
        for j in 1..=64u32 {
            slow += BigRational::new(BigInt::one(), BigInt::from(256 - j));
        }
        assert_eq!(fast, slow);
    }
}
