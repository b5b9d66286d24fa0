//! Small vector-norm helpers shared by the θ-step and the bound calculators.

/// Conjugate exponent `p / (p - 1)`; `p == 1` maps to `+inf`.
pub fn dual_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// `‖v‖_q` for `q ≥ 1` (or `q = inf`). Entries are taken in absolute value.
///
/// Scales by the max entry before raising to `q` so large exponents do not
/// overflow.
pub fn lp_norm(v: &[f64], q: f64) -> f64 {
    let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if max == 0.0 || q.is_infinite() {
        return max;
    }
    if q == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    if q == 2.0 {
        let s: f64 = v.iter().map(|x| (x / max) * (x / max)).sum();
        return max * s.sqrt();
    }
    let s: f64 = v.iter().map(|x| (x.abs() / max).powf(q)).sum();
    max * s.powf(1.0 / q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conjugate_exponents() {
        assert_eq!(dual_exponent(2.0), 2.0);
        assert!((dual_exponent(4.0 / 3.0) - 4.0).abs() < 1e-12);
        assert!(dual_exponent(1.0).is_infinite());
    }

    #[test]
    fn norms_of_simple_vectors() {
        assert_eq!(lp_norm(&[3.0, 4.0], 2.0), 5.0);
        assert_eq!(lp_norm(&[3.0, -4.0], 1.0), 7.0);
        assert_eq!(lp_norm(&[3.0, -4.0], f64::INFINITY), 4.0);
        assert_eq!(lp_norm(&[0.0, 0.0], 3.0), 0.0);
        let v = [1.0, 2.0, 3.0];
        let direct = (1.0f64 + 8.0 + 27.0).powf(1.0 / 3.0);
        assert!((lp_norm(&v, 3.0) - direct).abs() < 1e-14);
    }

    #[test]
    fn huge_exponent_does_not_overflow() {
        let v = [1e10, 2e10];
        let n = lp_norm(&v, 400.0);
        assert!(n.is_finite());
        assert!((n - 2e10).abs() / 2e10 < 1e-2);
    }
}
