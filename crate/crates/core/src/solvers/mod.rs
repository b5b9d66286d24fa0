//! The three block subproblems of the training loop: per-task SVM duals, the
//! kernel-weight step and the task-weight step.

mod lambda;
mod svm;
mod theta;

pub use lambda::{lambda_step, LambdaWeights};
pub use svm::{solve_svm_dual, solve_svm_dual_with, DualSolution, SvmOptions};
pub use theta::{theta_objective, theta_step, theta_step_literal};

use crate::error::{Error, Result};
use crate::kernel::{GramStack, ThetaWeights};

/// `θ_m² (α∘y)' K^m (α∘y)` per base kernel, i.e. `‖w^m‖²` in the split
/// coordinates. Dividing each entry by `θ_m` and summing gives `‖w‖²` under
/// the combined kernel.
pub fn component_sq_norms(alpha: &[f64], y: &[f64], stack: &GramStack, theta: &ThetaWeights) -> Result<Vec<f64>> {
    if alpha.len() != y.len() || alpha.len() != stack.num_samples() {
        return Err(Error::DimensionMismatch {
            expected: stack.num_samples(),
            got: alpha.len(),
        });
    }
    if theta.len() != stack.num_kernels() {
        return Err(Error::DimensionMismatch {
            expected: stack.num_kernels(),
            got: theta.len(),
        });
    }
    let ay: Vec<f64> = alpha.iter().zip(y).map(|(a, y)| a * y).collect();
    Ok(stack
        .grams()
        .iter()
        .zip(&theta.values)
        .map(|(k, &t)| {
            if t == 0.0 {
                0.0
            } else {
                t * t * crate::kernel::quad_form(k, &ay).max(0.0)
            }
        })
        .collect())
}
