//! Closed-form bounds on the probability of a successful exploit.
//!
//! Every countermeasure contributes one factor `w / 2^width` per attempt:
//! a canary `1 / 2^n`, address hiding (PointGuard, ASLR, or both together,
//! since both force a guess of one valid address) `|Valid| / 2^n`, and ISR
//! `|ISA| / 2^m`. Probabilities are carried as log2 values, with an exact
//! rational alongside whenever it is cheap to compute.

pub mod exact;
mod table1;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize, Serializer};

use crate::countermeasures::{CountermeasureSpec, StageKind};
use crate::error::BoundError;
use crate::game::KeyPolicy;
use crate::numfmt::pow2_label;
use exact::{log2_biguint, log2_rational, pow2, ratio, reciprocal_sum};

pub use table1::{table1, Table1, Table1Cell, Table1Row, REFERENCE_EXPONENTS, TABLE1_ARCHES, TABLE1_COMPOSITIONS};

/// Above this many queries per factor the multi-query sum is evaluated in floating point.
pub const EXACT_SUM_LIMIT: u64 = 1 << 12;

/// Above this many denominator bits the per-query power is evaluated in floating point.
const EXACT_POWER_BITS: u64 = 1 << 22;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Key / address width in bits.
    pub n: u32,
    /// Canary width when it differs from `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub canary_width: Option<u32>,
    /// Instruction width in bits.
    pub m: u32,
    pub valid_size: u64,
    pub isa_size: u64,
    /// Queries spent on the first, second and third factor.
    pub q: u64,
    pub r: u64,
    pub t: u64,
    /// Leaked key bits.
    pub lambda: u32,
    pub policy: KeyPolicy,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            n: 32,
            canary_width: None,
            m: 32,
            valid_size: 1 << 16,
            isa_size: 1 << 12,
            q: 1,
            r: 1,
            t: 1,
            lambda: 0,
            policy: KeyPolicy::Fixed,
        }
    }
}

impl BoundParams {
    fn check(&self) -> Result<(), BoundError> {
        if self.n == 0 || self.m == 0 || self.canary_width == Some(0) {
            return Err(BoundError::Params("widths must be positive".into()));
        }
        let n = self.canary_width.unwrap_or(self.n).min(self.n);
        if self.lambda >= n {
            return Err(BoundError::Params(format!("leaked bits {} must be below n = {n}", self.lambda)));
        }
        Ok(())
    }
}

/// A probability in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundResult {
    pub log2_value: f64,
    pub exact: Option<BigRational>,
    /// The raw value reached or exceeded 1 and is reported as 1.
    pub clamped: bool,
}

impl BoundResult {
    pub fn zero() -> Self {
        Self { log2_value: f64::NEG_INFINITY, exact: Some(BigRational::zero()), clamped: false }
    }

    pub fn saturated() -> Self {
        Self { log2_value: 0.0, exact: Some(BigRational::one()), clamped: true }
    }

    pub fn from_rational(r: BigRational) -> Self {
        if r >= BigRational::one() {
            return Self::saturated();
        }
        Self { log2_value: log2_rational(&r), exact: Some(r), clamped: false }
    }

    pub fn from_log2(log2_value: f64) -> Self {
        if log2_value >= 0.0 {
            return Self::saturated();
        }
        Self { log2_value, exact: None, clamped: false }
    }

    pub fn value(&self) -> f64 {
        match &self.exact {
            Some(r) => r.to_f64().unwrap_or_else(|| self.log2_value.exp2()),
            None => self.log2_value.exp2(),
        }
    }

    /// `2^-23` style rendering.
    pub fn label(&self) -> String {
        pow2_label(self.log2_value)
    }

    fn times(&self, other: &BoundResult) -> BoundResult {
        let clamped = self.clamped || other.clamped;
        let mut out = match (&self.exact, &other.exact) {
            (Some(a), Some(b)) => BoundResult::from_rational(a * b),
            _ => BoundResult::from_log2(self.log2_value + other.log2_value),
        };
        out.clamped |= clamped && out.log2_value == 0.0;
        out
    }

    /// `true` if an exact probability is no larger than this bound.
    pub fn dominates(&self, p: &BigRational) -> bool {
        match &self.exact {
            Some(b) => p <= b,
            None => log2_rational(p) <= self.log2_value,
        }
    }
}

impl Serialize for BoundResult {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            label: String,
            log2: Option<f64>,
            value: f64,
            exact: Option<String>,
            clamped: bool,
        }
        Repr {
            label: self.label(),
            log2: self.log2_value.is_finite().then_some(self.log2_value),
            value: self.value(),
            exact: self.exact.as_ref().map(exact::rational_to_string),
            clamped: self.clamped,
        }
        .serialize(s)
    }
}

#[derive(Clone, Debug)]
struct Factor {
    weight: u64,
    width: u32,
}

/// Per-attempt factors of a composition, in stage order.
fn factors(stages: &[StageKind], params: &BoundParams) -> Vec<Factor> {
    let mut out = Vec::new();
    if stages.contains(&StageKind::Canary) {
        out.push(Factor { weight: 1, width: params.canary_width.unwrap_or(params.n) });
    }
    if stages.contains(&StageKind::PointGuard) || stages.contains(&StageKind::Aslr) {
        out.push(Factor { weight: params.valid_size, width: params.n });
    }
    if stages.contains(&StageKind::Isr) {
        out.push(Factor { weight: params.isa_size, width: params.m });
    }
    out
}

pub fn stage_kinds(spec: &CountermeasureSpec) -> Vec<StageKind> {
    spec.stages().iter().map(|s| s.kind).collect()
}

fn raw_single(stages: &[StageKind], params: &BoundParams) -> BigRational {
    factors(stages, params).iter().fold(BigRational::one(), |acc, f| acc * ratio(f.weight, pow2(f.width)))
}

/// Probability that one attempt passes every stage.
pub fn single_attempt(stages: &[StageKind], params: &BoundParams) -> Result<BoundResult, BoundError> {
    params.check()?;
    Ok(BoundResult::from_rational(raw_single(stages, params)))
}

/// Exact running sum and its closed-form upper bound for fixed keys.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixedBound {
    pub exact_sum: BoundResult,
    pub closed_form: BoundResult,
}

/// `log2( sum_{j=1}^{c} 1/(2^width - j) )` for `c < 2^width`.
fn log2_reciprocal_sum(c: u64, width: u32) -> f64 {
    let cf = c as f64;
    if width >= 1000 || cf * 2f64.powi(-(width as i32)) < 1e-18 {
        // Every term equals 2^-width to double precision.
        return cf.log2() - width as f64;
    }
    if c <= 1 << 24 {
        let scale = 2f64.powi(-(width as i32));
        let s: f64 = (1..=c).map(|j| 1.0 / (1.0 - j as f64 * scale)).sum();
        return s.log2() - width as f64;
    }
    // Digamma difference; error O(2^-2width) relative to the sum.
    let big = 2f64.powi(width as i32);
    let ln_sum = -(-(cf) / (big - 0.5)).ln_1p();
    ln_sum.log2()
}

fn fixed_factor(f: &Factor, count: u64) -> (BoundResult, BoundResult) {
    if count == 0 || f.weight == 0 {
        return (BoundResult::zero(), BoundResult::zero());
    }
    let domain_fits = f.width < 64;
    if domain_fits && count >= 1u64 << f.width {
        return (BoundResult::saturated(), BoundResult::saturated());
    }
    let big = pow2(f.width);
    let closed = BoundResult::from_rational(ratio(BigUint::from(count) * f.weight, &big - BigUint::from(count)));
    let sum = if count <= EXACT_SUM_LIMIT {
        let (p, d) = reciprocal_sum(&big, 1, count + 1);
        BoundResult::from_rational(BigRational::new(BigInt::from(p * f.weight), BigInt::from(d)))
    } else {
        BoundResult::from_log2(log2_reciprocal_sum(count, f.width) + (f.weight as f64).log2())
    };
    (sum, closed)
}

/// Fixed keys: the attacker enumerates `q`, `r`, `t` distinct candidates for
/// the first, second and third factor.
pub fn multi_query_fixed(stages: &[StageKind], params: &BoundParams) -> Result<FixedBound, BoundError> {
    params.check()?;
    let counts = [params.q, params.r, params.t];
    let mut sum = BoundResult::from_rational(BigRational::one());
    sum.clamped = false;
    let mut closed = sum.clone();
    for (f, &c) in factors(stages, params).iter().zip(counts.iter()) {
        let (s, cf) = fixed_factor(f, c);
        sum = sum.times(&s);
        closed = closed.times(&cf);
    }
    Ok(FixedBound { exact_sum: sum, closed_form: closed })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerQueryBound {
    /// `min(1, q * p)`.
    pub union: BoundResult,
    /// `1 - (1 - p)^q`.
    pub exact: BoundResult,
}

/// Fresh keys before every query: `q` independent attempts.
pub fn multi_query_perquery(stages: &[StageKind], params: &BoundParams) -> Result<PerQueryBound, BoundError> {
    params.check()?;
    let q = params.q;
    if q == 0 {
        return Ok(PerQueryBound { union: BoundResult::zero(), exact: BoundResult::zero() });
    }
    let p = raw_single(stages, params);
    if p >= BigRational::one() {
        return Ok(PerQueryBound { union: BoundResult::saturated(), exact: BoundResult::saturated() });
    }
    let union = BoundResult::from_rational(&p * BigRational::from_integer(q.into()));
    let den_bits = p.denom().bits();
    let exact = if q <= EXACT_SUM_LIMIT && den_bits.saturating_mul(q) <= EXACT_POWER_BITS {
        let miss = BigRational::one() - &p;
        BoundResult::from_rational(BigRational::one() - num_traits::pow(miss, q as usize))
    } else {
        let log2_p = log2_rational(&p);
        if log2_p < -900.0 {
            // q * p with relative error below q * p / 2.
            BoundResult::from_log2(log2_p + (q as f64).log2())
        } else {
            let pf = log2_p.exp2();
            let v = -((q as f64) * (-pf).ln_1p()).exp_m1();
            BoundResult::from_log2(v.log2())
        }
    };
    Ok(PerQueryBound { union, exact })
}

/// Fixed-key bound after `lambda` key bits have leaked: `n` becomes `n - lambda`.
pub fn leakage_adjusted(stages: &[StageKind], params: &BoundParams) -> Result<FixedBound, BoundError> {
    params.check()?;
    let reduced = BoundParams {
        n: params.n - params.lambda,
        canary_width: params.canary_width.map(|w| w - params.lambda),
        lambda: 0,
        ..params.clone()
    };
    multi_query_fixed(stages, &reduced)
}

/// Distinguishing advantage between a random function and a random
/// permutation after `q` queries: `q(q-1) / 2^(n+1)`.
pub fn switching_bound(q: u64, n: u32) -> BoundResult {
    let qq = BigUint::from(q);
    let pairs = if q == 0 { BigUint::zero() } else { &qq * (&qq - 1u32) };
    BoundResult::from_rational(ratio(pairs, pow2(n + 1)))
}

pub fn log2_of(x: &BigUint) -> f64 {
    log2_biguint(x)
}
