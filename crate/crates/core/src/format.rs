//! Number formatting shared by every CSV writer.

/// Formats `v` with `digits` significant digits, `%g`-style: fixed notation
/// for moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn sig(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        return format!("{}e{}", trim_zeros(mantissa), exp);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, v)).to_string()
}

/// Twelve significant digits, the precision used by every emitted file.
pub fn sig12(v: f64) -> String {
    sig(v, 12)
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_and_scientific() {
        assert_eq!(sig12(0.0), "0");
        assert_eq!(sig12(1.5), "1.5");
        assert_eq!(sig12(48.0), "48");
        assert_eq!(sig12(0.0107068735), "0.0107068735");
        assert_eq!(sig12(7.259481705540116e-7), "7.25948170554e-7");
        assert_eq!(sig12(-2.0 / 3.0), "-0.666666666667");
        assert_eq!(sig12(1048576.0), "1048576");
        assert_eq!(sig12(1.0995116277760e12), "1.09951162778e12");
    }

    #[test]
    fn round_trip_precision() {
        for &v in &[std::f64::consts::PI, 1e-9, 123456.789012345, 5.0] {
            let back: f64 = sig12(v).parse().unwrap();
            assert!(((back - v) / v).abs() < 1e-11);
        }
    }
}
