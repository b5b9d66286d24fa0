//! Closed-form kernel-weight update on the Lp ball.

use crate::error::{Error, Result};
use crate::kernel::ThetaWeights;
use crate::norms::lp_norm;

/// Exact minimizer of `Σ_m u_m / (2 θ_m)` over `{θ ⪰ 0, ‖θ‖_p ≤ 1}`:
/// `θ_m = u_m^{1/(p+1)} / ‖u^{1/(p+1)}‖_p`.
///
/// In the trainer `u_m = Σ_t λ_t ‖w_t^m‖²`. An all-zero `u` yields
/// [`Error::ZeroWeights`]; the caller keeps its previous θ.
pub fn theta_step(u: &[f64], p: f64) -> Result<ThetaWeights> {
    check(u, p)?;
    let e = 1.0 / (p + 1.0);
    let a: Vec<f64> = u.iter().map(|v| v.powf(e)).collect();
    let norm = lp_norm(&a, p);
    ThetaWeights::new(a.iter().map(|v| v / norm).collect(), p)
}

/// The update written as `θ_m = (v_m / ‖v‖_{p/(p+1)})^{1/(p+1)}`, kept for
/// comparison runs where `v_m = Σ_t ‖w_t^m‖` (unsquared, unweighted).
///
/// Algebraically this is [`theta_step`] applied to `v`, so the two differ only
/// in which statistic the caller feeds in.
pub fn theta_step_literal(v: &[f64], p: f64) -> Result<ThetaWeights> {
    check(v, p)?;
    let r = p / (p + 1.0);
    let max = v.iter().fold(0.0_f64, |m, x| m.max(*x));
    let s: f64 = v.iter().map(|x| (x / max).powf(r)).sum();
    let quasi = max * s.powf(1.0 / r);
    let values = v.iter().map(|x| (x / quasi).powf(1.0 / (p + 1.0))).collect();
    ThetaWeights::new(values, p)
}

/// `Σ_m u_m / (2 θ_m)` with `0 / 0 = 0`; a positive `u_m` over `θ_m = 0` is `+inf`.
pub fn theta_objective(u: &[f64], theta: &[f64]) -> f64 {
    u.iter()
        .zip(theta)
        .map(|(&um, &tm)| {
            if um == 0.0 {
                0.0
            } else if tm == 0.0 {
                f64::INFINITY
            } else {
                um / (2.0 * tm)
            }
        })
        .sum()
}

fn check(u: &[f64], p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::invalid(format!("Lp exponent must be >= 1, got {p}")));
    }
    if u.is_empty() {
        return Err(Error::invalid("theta step needs at least one kernel"));
    }
    if u.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("theta step weights must be nonnegative and finite"));
    }
    if u.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroWeights);
    }
    Ok(())
}
