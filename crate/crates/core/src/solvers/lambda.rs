//! Task-weight update: minimize `Σ λ_t J_t` under `Σ c_t / λ_t ≤ a`, `λ ∈ [1, r]^T`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BRACKET_REL_TOL: f64 = 1e-12;
const BUDGET_TOL: f64 = 1e-10;

/// Task weights with the box and budget they were produced under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaWeights {
    pub values: Vec<f64>,
    pub r_lambda: f64,
    pub a: f64,
}

impl LambdaWeights {
    /// `λ = 1`; the budget is recorded but not enforced.
    pub fn ones(t: usize, r_lambda: f64, a: f64) -> Self {
        LambdaWeights {
            values: vec![1.0; t],
            r_lambda,
            a,
        }
    }

    /// `Σ λ_t J_t`
    pub fn objective(&self, j: &[f64]) -> f64 {
        self.values.iter().zip(j).map(|(l, j)| l * j).sum()
    }

    /// `Σ c_t / λ_t`
    pub fn budget_used(&self, c: &[f64]) -> f64 {
        budget(&self.values, c)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn budget(lambda: &[f64], c: &[f64]) -> f64 {
    lambda.iter().zip(c).map(|(l, c)| c / l).sum()
}

fn lambda_at(nu: f64, j: &[f64], c: &[f64], r: f64) -> Vec<f64> {
    j.iter()
        .zip(c)
        .map(|(&jt, &ct)| {
            if jt == 0.0 {
                r
            } else {
                (nu * ct / jt).sqrt().clamp(1.0, r)
            }
        })
        .collect()
}

/// KKT solution `λ_t = clip(√(ν c_t / J_t), 1, r)` with the multiplier ν found
/// by bisection. Returns `λ = 1` when the budget is already slack there. Tasks
/// with `J_t = 0` cost nothing and sit at `r`.
pub fn lambda_step(j: &[f64], c: &[f64], a: f64, r_lambda: f64) -> Result<LambdaWeights> {
    if j.len() != c.len() {
        return Err(Error::DimensionMismatch {
            expected: j.len(),
            got: c.len(),
        });
    }
    if j.is_empty() {
        return Err(Error::invalid("lambda step needs at least one task"));
    }
    if !(r_lambda > 1.0) || !r_lambda.is_finite() {
        return Err(Error::invalid(format!("r_lambda must be > 1, got {r_lambda}")));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::invalid(format!("budget a must be positive, got {a}")));
    }
    if j.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("task objectives must be nonnegative and finite"));
    }
    if c.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("budget coefficients must be positive and finite"));
    }
    let required: f64 = c.iter().sum::<f64>() / r_lambda;
    if required > a * (1.0 + 1e-12) {
        return Err(Error::InfeasibleBudget { required, budget: a });
    }
    let t = j.len();
    if c.iter().sum::<f64>() <= a {
        // J = 0 tasks are indifferent; keep them at the box floor like the rest
        return Ok(LambdaWeights::ones(t, r_lambda, a));
    }

    let g = |nu: f64| budget(&lambda_at(nu, j, c, r_lambda), c);
    let mut hi = 1.0;
    while g(hi) > a {
        hi *= 2.0;
        if !hi.is_finite() {
            // only reachable when the budget is met at λ = r with no slack
            let values = vec![r_lambda; t];
            return Ok(LambdaWeights { values, r_lambda, a });
        }
    }
    let mut lo = 0.0;
    loop {
        let gh = g(hi);
        if hi - lo < BRACKET_REL_TOL * hi || (gh - a).abs() < BUDGET_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > a {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(LambdaWeights {
        values: lambda_at(hi, j, c, r_lambda),
        r_lambda,
        a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_tight_budget() {
        let l = lambda_step(&[1.0, 1.0], &[1.0, 1.0], 1.0, 10.0).unwrap();
        for v in &l.values {
            assert!((v - 2.0).abs() < 1e-9);
        }
        assert!(l.budget_used(&[1.0, 1.0]) <= 1.0 + 1e-9);
    }

    #[test]
    fn asymmetric_kkt_point() {
        let j = [1.0, 4.0];
        let l = lambda_step(&j, &[1.0, 1.0], 1.0, 10.0).unwrap();
        assert!((l.values[0] - 3.0).abs() < 1e-9);
        assert!((l.values[1] - 1.5).abs() < 1e-9);
        assert!((l.objective(&j) - 9.0).abs() < 1e-8);
    }

    #[test]
    fn grid_oracle_on_asymmetric_case() {
        let j = [1.0, 4.0];
        let mut best = f64::INFINITY;
        let steps = 9000;
        for i in 0..=steps {
            let l1 = 1.0 + 9.0 * i as f64 / steps as f64;
            let rest = 1.0 - 1.0 / l1;
            if rest <= 0.0 {
                continue;
            }
            // smallest feasible λ₂ for this λ₁
            let l2 = (1.0 / rest).max(1.0);
            if l2 <= 10.0 {
                best = best.min(l1 * j[0] + l2 * j[1]);
            }
        }
        let l = lambda_step(&j, &[1.0, 1.0], 1.0, 10.0).unwrap();
        assert!(l.objective(&j) <= best + 1e-9);
    }

    #[test]
    fn slack_budget_returns_ones() {
        let l = lambda_step(&[3.0, 0.5], &[1.0, 2.0], 3.0, 8.0).unwrap();
        assert_eq!(l.values, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_objective_task_goes_to_upper_bound() {
        let l = lambda_step(&[0.0, 1.0], &[1.0, 1.0], 1.0, 4.0).unwrap();
        assert_eq!(l.values[0], 4.0);
        assert!(l.budget_used(&[1.0, 1.0]) <= 1.0 + 1e-9);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            lambda_step(&[1.0, 1.0], &[1.0, 1.0], 0.1, 2.0),
            Err(Error::InfeasibleBudget { .. })
        ));
        assert!(lambda_step(&[-1.0, 1.0], &[1.0, 1.0], 1.0, 2.0).is_err());
        assert!(lambda_step(&[1.0], &[1.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn budget_exactly_at_box_top() {
        let c = [1.0, 1.0];
        let l = lambda_step(&[1.0, 2.0], &c, 0.5, 4.0).unwrap();
        assert!(l.budget_used(&c) <= 0.5 + 1e-9);
        assert!(l.values.iter().all(|v| *v <= 4.0 && *v >= 1.0));
    }
}
