//! Parsing of power-of-two literals and `2^-k` formatting.

/// Parses `2^25`, `1<<10`, `0x400` or a plain decimal.
pub fn parse_count(s: &str) -> Result<u64, String> {
    let t = s.trim().replace('_', "");
    let err = || format!("cannot parse `{s}` as a count");
    if let Some(exp) = t.strip_prefix("2^").or_else(|| t.strip_prefix("2**")) {
        let e: u32 = exp.parse().map_err(|_| err())?;
        return 1u64.checked_shl(e).filter(|_| e < 64).ok_or_else(err);
    }
    if let Some(exp) = t.strip_prefix("1<<") {
        let e: u32 = exp.parse().map_err(|_| err())?;
        return 1u64.checked_shl(e).filter(|_| e < 64).ok_or_else(err);
    }
    if let Some(hex) = t.strip_prefix("0x") {
        return u64::from_str_radix(hex, 16).map_err(|_| err());
    }
    if let Some((mantissa, exp)) = t.split_once(['e', 'E']) {
        let m: u64 = mantissa.parse().map_err(|_| err())?;
        let e: u32 = exp.parse().map_err(|_| err())?;
        return 10u64.checked_pow(e).and_then(|p| p.checked_mul(m)).ok_or_else(err);
    }
    t.parse().map_err(|_| err())
}

/// `2^-23`, `1` or `0`, rounding the exponent when it is within 1e-9 of an integer.
pub fn pow2_label(log2: f64) -> String {
    if log2 == f64::NEG_INFINITY {
        return "0".to_string();
    }
    if log2 == 0.0 {
        return "1".to_string();
    }
    let r = log2.round();
    if (log2 - r).abs() < 1e-9 {
        format!("2^{}", r as i64)
    } else {
        format!("2^{log2:.4}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(parse_count("2^25").unwrap(), 1 << 25);
        assert_eq!(parse_count("1<<10").unwrap(), 1024);
        assert_eq!(parse_count("0x10").unwrap(), 16);
        assert_eq!(parse_count("1e5").unwrap(), 100_000);
        assert_eq!(parse_count("200_000").unwrap(), 200_000);
        assert!(parse_count("2^64").is_err());
        assert!(parse_count("lots").is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(pow2_label(-23.0), "2^-23");
        assert_eq!(pow2_label(0.0), "1");
        assert_eq!(pow2_label(f64::NEG_INFINITY), "0");
        assert_eq!(pow2_label(-1.5), "2^-1.5000");
    }
}
