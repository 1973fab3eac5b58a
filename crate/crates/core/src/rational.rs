//! Recovering small fractions from floating point values for display.

/// Best rational approximation `num/den` with `den <= max_den`, accepted only
/// if it is within `tol` of `x`.
pub fn approx_fraction(x: f64, max_den: u64, tol: f64) -> Option<(i64, u64)> {
    if !x.is_finite() {
        return None;
    }
    let sign = if x < 0.0 { -1 } else { 1 };
    let target = x.abs();
    // Convergents h/k of the continued fraction of |x|.
    let (mut h0, mut h1): (u64, u64) = (0, 1);
    let (mut k0, mut k1): (u64, u64) = (1, 0);
    let mut rem = target;
    for _ in 0..64 {
        let a = rem.floor();
        if a > 1e15 {
            break;
        }
        let a = a as u64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (h1 as f64 / k1 as f64 - target).abs() <= tol {
            return Some((sign * h1 as i64, k1));
        }
        let frac = rem - a as f64;
        if frac <= f64::EPSILON {
            break;
        }
        rem = 1.0 / frac;
    }
    if k1 > 0 && (h1 as f64 / k1 as f64 - target).abs() <= tol {
        Some((sign * h1 as i64, k1))
    } else {
        None
    }
}

/// `"2/15"`, `"0"`, `"1"`, or a decimal when no small fraction fits.
pub fn format_fraction(x: f64) -> String {
    match approx_fraction(x, 200_000, 1e-13) {
        Some((0, _)) => "0".into(),
        Some((num, 1)) => num.to_string(),
        Some((num, den)) => format!("{num}/{den}"),
        None => format!("{x:.10}"),
    }
}

/// `"2/15 (0.1333333333)"`
pub fn format_probability(x: f64) -> String {
    format!("{} ({x:.10})", format_fraction(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_fractions() {
        assert_eq!(approx_fraction(2.0 / 15.0, 1000, 1e-12), Some((2, 15)));
        assert_eq!(approx_fraction(-19.0 / 83.0, 1000, 1e-12), Some((-19, 83)));
        assert_eq!(approx_fraction(361.0 / 7968.0, 10_000, 1e-12), Some((361, 7968)));
        assert_eq!(approx_fraction(0.0, 10, 1e-12), Some((0, 1)));
        assert_eq!(approx_fraction(3.0, 10, 1e-12), Some((3, 1)));
        assert_eq!(approx_fraction(std::f64::consts::PI, 100, 1e-9), None);
    }

    #[test]
    fn formatting() {
        assert_eq!(format_fraction(1.0 / 3.0), "1/3");
        assert_eq!(format_fraction(1.0), "1");
        assert_eq!(format_fraction(1e-17), "0");
        assert_eq!(format_probability(0.5), "1/2 (0.5000000000)");
        assert!(format_fraction(2f64.sqrt()).starts_with("1.41421356"));
    }
}
