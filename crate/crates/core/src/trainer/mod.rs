//! Block-coordinate descent for the λ-weighted multi-task MKL objective
//! `Σ_t λ_t (½ Σ_m ‖w_t^m‖² / θ_m + C Σ_i hinge(y_t^i f_t(x_t^i)))`
//! in its Conic, Average and Pareto-path variants, plus prediction.

mod model;
mod pareto;

pub use model::{decision_from_grams, predict, MtlModel, Prediction, TaskState, MODEL_VERSION};
pub use pareto::pareto_lambda;

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::margin_loss;
use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::kernel::{combine, GramStack, KernelSpec, Standardizer, ThetaWeights};
use crate::norms::lp_norm;
use crate::solvers::{
    component_sq_norms, lambda_step, solve_svm_dual_with, theta_objective, theta_step, DualSolution, LambdaWeights,
    SvmOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mode {
    Conic,
    Average,
    /// Iterated reweighting with the Pareto-path task weights, damped by ½.
    ParetoPath { p_exp: f64 },
}

/// Statistic fed to the θ-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaUpdate {
    /// `u_m = Σ_t λ_t ‖w_t^m‖²`, the exact block minimizer.
    #[default]
    Exact,
    /// `v_m = Σ_t ‖w_t^m‖`; not a descent step in general.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub c: f64,
    pub p: f64,
    /// Budget for `Σ_t c_t / λ_t`, with `c_t = ‖v_t‖_{p*}`.
    pub a: f64,
    pub r_lambda: f64,
    pub mode: Mode,
    pub use_bias: bool,
    pub tol_rel_obj: f64,
    pub max_outer_iters: usize,
    pub seed: u64,
    #[serde(default)]
    pub theta_update: ThetaUpdate,
    /// Duality-gap tolerance of the inner SVM solves. Tighter than the solver
    /// default so that block steps stay monotone at 1e-9 relative.
    pub svm_tol: f64,
    pub svm_max_iter: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 1.0,
            p: 2.0,
            a: 1.0,
            r_lambda: 8.0,
            mode: Mode::Conic,
            use_bias: false,
            tol_rel_obj: 1e-5,
            max_outer_iters: 50,
            seed: 0,
            theta_update: ThetaUpdate::Exact,
            svm_tol: 1e-10,
            svm_max_iter: 100_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!("C must be positive, got {}", self.c)));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::invalid(format!("p must be >= 1, got {}", self.p)));
        }
        if !(self.a > 0.0) {
            return Err(Error::invalid(format!("budget a must be positive, got {}", self.a)));
        }
        if !(self.r_lambda > 1.0 && self.r_lambda.is_finite()) {
            return Err(Error::invalid(format!("r_lambda must be > 1, got {}", self.r_lambda)));
        }
        if !(self.tol_rel_obj > 0.0) {
            return Err(Error::invalid("tol_rel_obj must be positive"));
        }
        if self.max_outer_iters == 0 {
            return Err(Error::invalid("max_outer_iters must be positive"));
        }
        if let Mode::ParetoPath { p_exp } = self.mode {
            if !(p_exp > 0.0 && p_exp <= 1.0) {
                return Err(Error::invalid(format!("p_exp must lie in (0, 1], got {p_exp}")));
            }
        }
        Ok(())
    }

    fn svm_options(&self) -> SvmOptions {
        SvmOptions {
            tol: self.svm_tol,
            max_iter: self.svm_max_iter,
        }
    }
}

/// `c_t = ‖v_t‖_{p*}` per task.
pub fn budget_coefficients(stacks: &[GramStack], p: f64) -> Vec<f64> {
    let q = crate::norms::dual_exponent(p);
    stacks.iter().map(|s| lp_norm(s.traces(), q)).collect()
}

struct WStep {
    duals: Vec<DualSolution>,
    /// `J_t` under the θ the duals were solved with.
    objectives: Vec<f64>,
}

fn w_step(stacks: &[GramStack], ys: &[&[f64]], theta: &ThetaWeights, cfg: &TrainConfig) -> Result<WStep> {
    let opts = cfg.svm_options();
    let duals = stacks
        .par_iter()
        .zip(ys.par_iter())
        .map(|(stack, y)| {
            let k = combine(stack, theta)?;
            let mut d = solve_svm_dual_with(&k, y, cfg.c, cfg.use_bias, &opts).map_err(|e| tag_task(e, stack.task_id()))?;
            d.component_sq_norms = component_sq_norms(&d.alpha, y, stack, theta)?;
            Ok(d)
        })
        .collect::<Result<Vec<_>>>()?;
    let objectives = duals.iter().map(|d| d.objective).collect();
    Ok(WStep { duals, objectives })
}

fn tag_task(e: Error, task: &str) -> Error {
    match e {
        Error::DegenerateTask { reason, .. } => Error::DegenerateTask {
            task: task.to_string(),
            reason,
        },
        other => other,
    }
}

fn weighted(lambda: &[f64], j: &[f64]) -> f64 {
    lambda.iter().zip(j).map(|(l, j)| l * j).sum()
}

/// Result of the optimization alone, without sample data attached.
#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub theta: ThetaWeights,
    pub lambda: LambdaWeights,
    pub duals: Vec<DualSolution>,
    pub objective_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
}

/// Runs the block-coordinate descent on precomputed Gram stacks.
///
/// Each outer iteration appends three entries to the trace, the objective
/// after the w-, θ- and λ-steps. A final w-step under the last θ appends one
/// more, so the returned duals are optimal for the returned θ.
pub fn fit_stacks(stacks: &[GramStack], ys: &[&[f64]], cfg: &TrainConfig) -> Result<FitState> {
    cfg.validate()?;
    if stacks.is_empty() || stacks.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: stacks.len(),
            got: ys.len(),
        });
    }
    let m = stacks[0].num_kernels();
    for (s, y) in stacks.iter().zip(ys) {
        if s.num_kernels() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: s.num_kernels(),
            });
        }
        if s.num_samples() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: s.num_samples(),
                got: y.len(),
            });
        }
        let pos = y.iter().filter(|v| **v > 0.0).count();
        if pos == 0 || pos == y.len() {
            return Err(Error::DegenerateTask {
                task: s.task_id().to_string(),
                reason: "training labels contain a single class".into(),
            });
        }
    }
    let t = stacks.len();
    let c = budget_coefficients(stacks, cfg.p);
    let mut theta = ThetaWeights::uniform(m, cfg.p)?;
    let mut lambda = match cfg.mode {
        // the λ-step at J = 1 gives the smallest feasible λ; it is all ones
        // whenever the budget is slack there
        Mode::Conic => lambda_step(&vec![1.0; t], &c, cfg.a, cfg.r_lambda)?,
        Mode::Average | Mode::ParetoPath { .. } => LambdaWeights::ones(t, cfg.r_lambda, cfg.a),
    };
    let mut trace = Vec::new();
    let mut converged = false;
    let mut outer = 0;
    let mut prev_end: Option<f64> = None;

    while outer < cfg.max_outer_iters {
        outer += 1;
        let w = w_step(stacks, ys, &theta, cfg)?;
        trace.push(weighted(&lambda.values, &w.objectives));

        let stat: Vec<f64> = (0..m)
            .map(|k| match cfg.theta_update {
                ThetaUpdate::Exact => (0..t).map(|i| lambda.values[i] * w.duals[i].component_sq_norms[k]).sum(),
                ThetaUpdate::Literal => (0..t).map(|i| w.duals[i].component_sq_norms[k].sqrt()).sum(),
            })
            .collect();
        match theta_step(&stat, cfg.p) {
            Ok(next) => theta = next,
            Err(Error::ZeroWeights) => log::warn!("all component norms vanished; keeping θ"),
            Err(e) => return Err(e),
        }
        // objectives with w fixed and θ updated; the hinge part is unchanged
        let j_theta: Vec<f64> = w
            .duals
            .iter()
            .map(|d| theta_objective(&d.component_sq_norms, &theta.values) + cfg.c * d.hinge_sum)
            .collect();
        trace.push(weighted(&lambda.values, &j_theta));

        match cfg.mode {
            Mode::Conic => lambda = lambda_step(&j_theta, &c, cfg.a, cfg.r_lambda)?,
            Mode::Average => {}
            Mode::ParetoPath { p_exp } => {
                let target = pareto_lambda(&j_theta, p_exp)?;
                for (l, tv) in lambda.values.iter_mut().zip(target) {
                    *l = 0.5 * *l + 0.5 * tv;
                }
            }
        }
        let end = weighted(&lambda.values, &j_theta);
        trace.push(end);

        if let Some(prev) = prev_end {
            if (prev - end).abs() <= cfg.tol_rel_obj * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        prev_end = Some(end);
    }
    if !converged {
        log::warn!("block-coordinate descent stopped after {outer} outer iterations without converging");
    }
    let w = w_step(stacks, ys, &theta, cfg)?;
    trace.push(weighted(&lambda.values, &w.objectives));
    let svm_ok = w.duals.iter().all(|d| d.converged);
    if !svm_ok {
        log::warn!("an inner SVM solve hit its iteration limit");
    }
    Ok(FitState {
        theta,
        lambda,
        duals: w.duals,
        objective_trace: trace,
        outer_iterations: outer,
        converged: converged && svm_ok,
    })
}

/// Trains on tasks whose features are already in kernel space (standardized
/// if desired) with their Gram stacks built from `kernels`.
pub fn fit(tasks: &[TaskDataset], stacks: &[GramStack], kernels: &[KernelSpec], cfg: &TrainConfig) -> Result<MtlModel> {
    if tasks.len() != stacks.len() {
        return Err(Error::DimensionMismatch {
            expected: tasks.len(),
            got: stacks.len(),
        });
    }
    for t in tasks {
        t.require_both_classes()?;
    }
    let ys: Vec<&[f64]> = tasks.iter().map(|t| t.y.as_slice()).collect();
    let state = fit_stacks(stacks, &ys, cfg)?;
    Ok(MtlModel::from_state(state, tasks, kernels.to_vec(), None, cfg.clone()))
}

/// Standardizes on the union of the tasks' samples, builds the Gram stacks
/// and fits. The returned model standardizes inputs at prediction time.
pub fn train(tasks: &[TaskDataset], kernels: &[KernelSpec], standardize: bool, cfg: &TrainConfig) -> Result<MtlModel> {
    let (prepared, standardizer) = prepare(tasks, standardize)?;
    let stacks = build_stacks(&prepared, kernels)?;
    let mut model = fit(&prepared, &stacks, kernels, cfg)?;
    model.standardizer = standardizer;
    Ok(model)
}

/// Applies a standardizer fitted on the union of all tasks' rows.
pub fn prepare(tasks: &[TaskDataset], standardize: bool) -> Result<(Vec<TaskDataset>, Option<Standardizer>)> {
    if !standardize {
        return Ok((tasks.to_vec(), None));
    }
    let views: Vec<ArrayView2<f64>> = tasks.iter().map(|t| t.x.view()).collect();
    let all = ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| Error::invalid(e.to_string()))?;
    let s = Standardizer::fit(all.view())?;
    let prepared = tasks
        .iter()
        .map(|t| {
            Ok(TaskDataset {
                x: s.transform(t.x.view())?,
                ..t.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((prepared, Some(s)))
}

pub fn build_stacks(tasks: &[TaskDataset], kernels: &[KernelSpec]) -> Result<Vec<GramStack>> {
    tasks
        .par_iter()
        .map(|t| GramStack::from_samples(t.task_id.clone(), kernels, t.x.view()))
        .collect()
}

/// Baseline: one independent MKL problem for a single task (`λ ≡ 1`).
pub fn fit_single_task(task: &TaskDataset, stack: &GramStack, kernels: &[KernelSpec], cfg: &TrainConfig) -> Result<MtlModel> {
    let cfg = TrainConfig {
        mode: Mode::Average,
        ..cfg.clone()
    };
    fit(std::slice::from_ref(task), std::slice::from_ref(stack), kernels, &cfg)
}

/// `(1/T) Σ_t (λ_t / N_t) Σ_i l_ρ(y_t^i f_t(x_t^i))` on the training samples.
pub fn weighted_empirical_loss(model: &MtlModel, rho: f64) -> f64 {
    let t = model.tasks.len() as f64;
    model
        .tasks
        .iter()
        .zip(&model.lambda.values)
        .map(|(task, l)| {
            let n = task.y.len() as f64;
            let s: f64 = task
                .dual
                .decision_values
                .iter()
                .zip(&task.y)
                .map(|(f, y)| margin_loss(y * f, rho))
                .sum();
            l * s / n
        })
        .sum::<f64>()
        / t
}
