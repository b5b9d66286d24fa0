//! Two-sample t-tests for comparing methods across runs.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Variance floor used when a sample has zero spread but the means differ.
const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p_value: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

fn two_sided(t: f64, df: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0);
    }
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::invalid(format!("t distribution: {e}")))?;
    Ok((2.0 * dist.cdf(-t.abs())).min(1.0))
}

fn check(x: &[f64], name: &str) -> Result<()> {
    if x.len() < 2 {
        return Err(Error::invalid(format!("{name}: t-test needs at least 2 samples")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-test sample"));
    }
    Ok(())
}

/// Welch's unequal-variance t-test of `mean(a) = mean(b)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    check(a, "first sample")?;
    check(b, "second sample")?;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 && ma == mb {
        return Ok(TTest {
            t: 0.0,
            df: (a.len() + b.len() - 2) as f64,
            p_value: 1.0,
        });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sa = va.max(VARIANCE_FLOOR) / na;
    let sb = vb.max(VARIANCE_FLOOR) / nb;
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    Ok(TTest {
        t,
        df,
        p_value: two_sided(t, df)?,
    })
}

/// Paired t-test on `a_i - b_i`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    check(a, "first sample")?;
    check(b, "second sample")?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (m, v) = mean_var(&d);
    let df = (d.len() - 1) as f64;
    if m == 0.0 {
        return Ok(TTest { t: 0.0, df, p_value: 1.0 });
    }
    let t = m / (v.max(VARIANCE_FLOOR) / d.len() as f64).sqrt();
    Ok(TTest {
        t,
        df,
        p_value: two_sided(t, df)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two-sided p-value from Simpson quadrature of the t density.
    fn p_oracle(t: f64, df: f64) -> f64 {
        let ln_gamma = |x: f64| {
            // Lanczos approximation, g = 7
            const C: [f64; 9] = [
                0.999_999_999_999_809_9,
                676.520_368_121_885_1,
                -1_259.139_216_722_402_8,
                771.323_428_777_653_1,
                -176.615_029_162_140_6,
                12.507_343_278_686_905,
                -0.138_571_095_265_720_12,
                9.984_369_578_019_572e-6,
                1.505_632_735_149_311_6e-7,
            ];
            let x = x - 1.0;
            let mut s = C[0];
            for (i, c) in C.iter().enumerate().skip(1) {
                s += c / (x + i as f64);
            }
            let tt = x + 7.5;
            0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * tt.ln() - tt + s.ln()
        };
        let norm = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp() / (df * std::f64::consts::PI).sqrt();
        let f = |x: f64| norm * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0);
        let b = t.abs();
        let n = 20_000;
        let h = b / n as f64;
        let mut s = f(0.0) + f(b);
        for i in 1..n {
            s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        1.0 - 2.0 * s * h / 3.0
    }

    #[test]
    fn identical_samples() {
        let a = [0.8, 0.9, 0.85];
        let r = welch_t_test(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(paired_t_test(&a, &a).unwrap().p_value, 1.0);
        let c = [0.5; 4];
        assert_eq!(welch_t_test(&c, &c).unwrap().p_value, 1.0);
    }

    #[test]
    fn separated_constants() {
        let r = welch_t_test(&[0.0; 20], &[1.0; 20]).unwrap();
        assert!(r.p_value < 1e-10, "{r:?}");
        assert!(r.t < 0.0);
    }

    #[test]
    fn shifted_ranges_match_quadrature() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [2.0, 3.0, 4.0, 5.0, 6.0];
        let r = welch_t_test(&a, &b).unwrap();
        assert!((r.t + 1.0).abs() < 1e-12);
        assert!((r.df - 8.0).abs() < 1e-12);
        assert!((r.p_value - p_oracle(r.t, r.df)).abs() < 1e-8);
        assert!((r.p_value - 0.3466).abs() < 1e-4);
    }

    #[test]
    fn welch_df_oracle_unequal() {
        let a = [0.1, 0.4, 0.2, 0.9, 0.5, 0.3];
        let b = [0.7, 0.8, 0.75];
        let r = welch_t_test(&a, &b).unwrap();
        assert!((r.p_value - p_oracle(r.t, r.df)).abs() < 1e-7);
        let p = paired_t_test(&a[..3], &b).unwrap();
        assert!((p.df - 2.0).abs() < 1e-15);
        assert!((p.p_value - p_oracle(p.t, p.df)).abs() < 1e-7);
    }

    #[test]
    fn rejects_tiny_or_bad_samples() {
        assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[1.0]).is_err());
    }
}
