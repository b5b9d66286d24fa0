//! Generalization-bound terms and Rademacher-complexity estimation.
//!
//! For fixed signs σ the supremum of the Rademacher correlation over the
//! hypothesis class has a closed form: with `u_m(σ) = Σ_t (γ_t²/λ_t) σ_t'K_t^m σ_t`
//! it equals `√(R ‖u(σ)‖_{p*})`. The estimators therefore only average that
//! closed form over σ, by exhaustive enumeration when there are at most
//! [`EXHAUSTIVE_LIMIT`] signs and by seeded Monte-Carlo otherwise.

mod rademacher;
pub mod radcheck;
mod report;

pub use rademacher::{estimate_s, rademacher_mc, McOptions, RademacherEstimate, EXHAUSTIVE_LIMIT};
pub use report::{bound_report, model_stacks, test_error, BoundOptions, BoundReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{dual_exponent, lp_norm};

/// Ramp loss: 0 for `x ≥ ρ`, `1 - x/ρ` on `[0, ρ]`, 1 for `x ≤ 0`.
pub fn margin_loss(x: f64, rho: f64) -> f64 {
    if x >= rho {
        0.0
    } else if x <= 0.0 {
        1.0
    } else {
        1.0 - x / rho
    }
}

/// Quantities entering the bounds. `n_total` is the number of training
/// samples over all tasks (`TN` for equal task sizes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub t: usize,
    pub n_total: usize,
    pub m: usize,
    pub lambda: Vec<f64>,
    pub r_lambda: f64,
    pub rho: f64,
    pub delta: f64,
    /// Radius of the hypothesis ball.
    pub r: f64,
    pub p: f64,
    /// Trace vectors `v_t`.
    pub traces: Vec<Vec<f64>>,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.t == 0 || self.n_total == 0 || self.lambda.len() != self.t || self.traces.len() != self.t {
            return Err(Error::invalid("bound inputs: inconsistent task counts"));
        }
        if self.lambda.iter().any(|l| !(*l >= 1.0) || *l > self.r_lambda) {
            return Err(Error::invalid("bound inputs: λ must lie in [1, r_lambda]"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("δ must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.rho > 0.0) || !(self.r > 0.0) || !(self.p >= 1.0) {
            return Err(Error::invalid("bound inputs: ρ and R must be positive, p >= 1"));
        }
        Ok(())
    }

    fn tn(&self) -> f64 {
        self.n_total as f64
    }
}

/// `(2√(2 R p*) / TN) · √(Σ_t ‖v_t‖_{p*} / λ_t)`. Not defined for `p = 1`
/// (`p* = ∞`), where `None` is returned.
pub fn erc_upper_bound_lp(inputs: &BoundInputs) -> Option<f64> {
    let q = dual_exponent(inputs.p);
    if q.is_infinite() {
        return None;
    }
    Some(erc_upper_with(inputs, q, q))
}

/// Variant usable at `p = 1`: the factor `p*` and the norm exponent are
/// replaced by `max(1, ln M)` when `p*` exceeds it.
pub fn erc_upper_bound_lp_smoothed(inputs: &BoundInputs) -> f64 {
    let q = dual_exponent(inputs.p);
    let cap = (inputs.m as f64).ln().max(1.0);
    if q > cap {
        erc_upper_with(inputs, cap, cap)
    } else {
        erc_upper_with(inputs, q, q)
    }
}

fn erc_upper_with(inputs: &BoundInputs, factor: f64, q: f64) -> f64 {
    let s: f64 = inputs
        .traces
        .iter()
        .zip(&inputs.lambda)
        .map(|(v, l)| lp_norm(v, q) / l)
        .sum();
    2.0 * (2.0 * inputs.r * factor).sqrt() / inputs.tn() * s.sqrt()
}

/// Additive terms of a bound's right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub empirical: f64,
    pub complexity: f64,
    /// Price of choosing λ from data; 0 for the fixed-λ bound.
    pub lambda_choice: f64,
    pub confidence: f64,
    pub total: f64,
    /// The logarithm in the λ-choice term was negative and the term was set to 0.
    pub clamped: bool,
}

/// Bound valid uniformly over `λ ∈ (1, r_λ)^T`:
/// `êr + (√2 r_λ/ρ) erc + √((9/TN) ln((2 r_λ/T) Σ 1/λ_t)) + √(9 ln(1/δ) / (2TN))`.
pub fn bound_rhs_any_lambda(inputs: &BoundInputs, emp_loss: f64, erc: f64) -> BoundTerms {
    if inputs
        .lambda
        .iter()
        .any(|l| *l <= 1.0 || *l >= inputs.r_lambda)
    {
        log::debug!("λ on the boundary of (1, r_λ); the uniform bound is stated for the open box");
    }
    let tn = inputs.tn();
    let complexity = std::f64::consts::SQRT_2 * inputs.r_lambda / inputs.rho * erc;
    let inv: f64 = inputs.lambda.iter().map(|l| 1.0 / l).sum();
    let log_arg = 2.0 * inputs.r_lambda / inputs.t as f64 * inv;
    let ln = log_arg.ln();
    let clamped = ln < 0.0;
    if clamped {
        log::warn!("ln((2r_λ/T) Σ 1/λ_t) = {ln} < 0; λ-choice term clamped at 0");
    }
    let lambda_choice = (9.0 / tn * ln.max(0.0)).sqrt();
    let confidence = confidence_term(inputs.delta, tn);
    BoundTerms {
        empirical: emp_loss,
        complexity,
        lambda_choice,
        confidence,
        total: emp_loss + complexity + lambda_choice + confidence,
        clamped,
    }
}

/// Bound for a λ fixed before seeing the data: `êr + (r_λ/ρ) erc + √(9 ln(1/δ) / (2TN))`.
pub fn bound_rhs_fixed_lambda(inputs: &BoundInputs, emp_loss: f64, erc: f64) -> BoundTerms {
    let tn = inputs.tn();
    let complexity = inputs.r_lambda / inputs.rho * erc;
    let confidence = confidence_term(inputs.delta, tn);
    BoundTerms {
        empirical: emp_loss,
        complexity,
        lambda_choice: 0.0,
        confidence,
        total: emp_loss + complexity + confidence,
        clamped: false,
    }
}

fn confidence_term(delta: f64, tn: f64) -> f64 {
    (9.0 * (1.0 / delta).ln() / (2.0 * tn)).sqrt()
}
