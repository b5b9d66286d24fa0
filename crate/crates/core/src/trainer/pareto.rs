use crate::error::{Error, Result};

/// Task weights along the Pareto path for objective values `f ≻ 0`:
///
/// * `p > 1`: `λ_t = f_t^{p-1} / Σ_s f_s^p`
/// * `p = 1`: `λ_t = 1`
/// * `0 < p < 1`: `λ_t = (Σ_s f_s^p)^{(1-p)/p} / f_t^{1-p}`
///
/// The last case is the gradient of `(Σ f^p)^{1/p}`. Every component then
/// exceeds 1 for two or more tasks and decreases as `p` grows toward 1.
pub fn pareto_lambda(f: &[f64], p: f64) -> Result<Vec<f64>> {
    if f.is_empty() {
        return Err(Error::invalid("no task objectives"));
    }
    if f.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("Pareto weights need strictly positive objectives"));
    }
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::invalid(format!("Pareto exponent must be positive, got {p}")));
    }
    if p == 1.0 {
        return Ok(vec![1.0; f.len()]);
    }
    if p > 1.0 {
        let denom: f64 = f.iter().map(|v| v.powf(p)).sum();
        return Ok(f.iter().map(|v| v.powf(p - 1.0) / denom).collect());
    }
    // (Σ f^p)^{1/p} / f_t, computed relative to the largest entry
    let max = f.iter().fold(0.0_f64, |m, v| m.max(*v));
    let s: f64 = f.iter().map(|v| (v / max).powf(p)).sum();
    let norm = max * s.powf(1.0 / p);
    Ok(f.iter().map(|v| (norm / v).powf(1.0 - p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn middle_case_is_all_ones() {
        assert_eq!(pareto_lambda(&[0.3, 7.0, 2.0], 1.0).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn symmetric_half() {
        let l = pareto_lambda(&[1.0, 1.0], 0.5).unwrap();
        for v in l {
            assert!((v - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn upper_branch() {
        let l = pareto_lambda(&[1.0, 2.0], 2.0).unwrap();
        assert!((l[0] - 0.2).abs() < 1e-15);
        assert!((l[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn lower_branch_is_gradient_of_p_norm() {
        let f = [0.7, 2.5, 1.3];
        let p = 0.4;
        let g = |f: &[f64]| f.iter().map(|v| v.powf(p)).sum::<f64>().powf(1.0 / p);
        let l = pareto_lambda(&f, p).unwrap();
        let h = 1e-6;
        for t in 0..f.len() {
            let (mut up, mut down) = (f, f);
            up[t] += h;
            down[t] -= h;
            let fd = (g(&up) - g(&down)) / (2.0 * h);
            assert!((l[t] - fd).abs() < 1e-7 * fd, "{t}: {} vs {fd}", l[t]);
        }
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(pareto_lambda(&[1.0, 0.0], 0.5).is_err());
        assert!(pareto_lambda(&[1.0], 0.0).is_err());
    }
}
