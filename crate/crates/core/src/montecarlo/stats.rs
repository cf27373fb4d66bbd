use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

/// Two-sided normal quantile for the given confidence level.
pub fn z_for(confidence: f64) -> f64 {
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    std.inverse_cdf(1.0 - (1.0 - confidence) / 2.0)
}

/// Wilson score interval for a binomial proportion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Wilson {
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
}

impl Wilson {
    pub fn new(successes: u64, trials: u64, confidence: f64) -> Self {
        assert!(trials > 0, "Wilson interval needs at least one trial");
        let n = trials as f64;
        let p = successes as f64 / n;
        let z = z_for(confidence);
        let z2 = z * z;
        let denom = 1.0 + z2 / n;
        let center = (p + z2 / (2.0 * n)) / denom;
        let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
        Self {
            lower: if successes == 0 { 0.0 } else { (center - half).max(0.0) },
            upper: if successes == trials { 1.0 } else { (center + half).min(1.0) },
            confidence,
        }
    }

    pub fn at99(successes: u64, trials: u64) -> Self {
        Self::new(successes, trials, 0.99)
    }

    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }

    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile() {
        assert!((z_for(0.99) - 2.575829).abs() < 1e-5);
        assert!((z_for(0.95) - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn reference_interval() {
        // 10 of 100 at 95%: standard textbook value (0.0552, 0.1744).
        let w = Wilson::new(10, 100, 0.95);
        assert!((w.lower - 0.05523).abs() < 1e-4);
        assert!((w.upper - 0.17437).abs() < 1e-4);
    }

    #[test]
    fn edges() {
        let w = Wilson::at99(0, 1000);
        assert_eq!(w.lower, 0.0);
        assert!(w.upper > 0.0 && w.upper < 0.01);
        let w = Wilson::at99(1000, 1000);
        assert_eq!(w.upper, 1.0);
        assert!(w.contains(1.0));
    }
}
