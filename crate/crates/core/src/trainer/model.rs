use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{FitState, TrainConfig};
use crate::data::TaskDataset;
use crate::error::{Error, Result};
use crate::kernel::{compute_gram, KernelSpec, Standardizer, ThetaWeights};
use crate::solvers::{DualSolution, LambdaWeights};

pub const MODEL_VERSION: u32 = 1;

/// Per-task training samples and solved dual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub task_id: String,
    /// Training features as seen by the kernels (after standardization).
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub sample_hash: String,
    pub dual: DualSolution,
}

/// A trained multi-task model. Serialized as versioned JSON; floats
/// round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtlModel {
    pub version: u32,
    pub config: TrainConfig,
    pub kernels: Vec<KernelSpec>,
    pub standardizer: Option<Standardizer>,
    pub theta: ThetaWeights,
    pub lambda: LambdaWeights,
    pub tasks: Vec<TaskState>,
    pub objective_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<f64>,
    pub decision_values: Vec<f64>,
}

impl MtlModel {
    pub(crate) fn from_state(
        state: FitState,
        tasks: &[TaskDataset],
        kernels: Vec<KernelSpec>,
        standardizer: Option<Standardizer>,
        config: TrainConfig,
    ) -> Self {
        let tasks = tasks
            .iter()
            .zip(state.duals)
            .map(|(t, dual)| TaskState {
                task_id: t.task_id.clone(),
                x: t.x.clone(),
                y: t.y.clone(),
                sample_hash: t.sample_hash(),
                dual,
            })
            .collect();
        MtlModel {
            version: MODEL_VERSION,
            config,
            kernels,
            standardizer,
            theta: state.theta,
            lambda: state.lambda,
            tasks,
            objective_trace: state.objective_trace,
            outer_iterations: state.outer_iterations,
            converged: state.converged,
        }
    }

    pub fn task_index(&self, task_id: &str) -> Result<usize> {
        self.tasks
            .iter()
            .position(|t| t.task_id == task_id)
            .ok_or_else(|| Error::UnknownTask(task_id.to_string()))
    }

    pub fn duals(&self) -> impl Iterator<Item = &DualSolution> {
        self.tasks.iter().map(|t| &t.dual)
    }

    /// Final value of the training objective.
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(f64::NAN)
    }

    /// `Σ_t λ_t ‖w_t‖²`, where `‖w_t‖² = Σ_m ‖w_t^m‖² / θ_m`.
    pub fn weighted_sq_norm(&self) -> f64 {
        self.tasks
            .iter()
            .zip(&self.lambda.values)
            .map(|(t, l)| l * crate::solvers::theta_objective(&t.dual.component_sq_norms, &self.theta.values) * 2.0)
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: MtlModel = serde_json::from_str(text)?;
        if m.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "model version {} is not supported (expected {MODEL_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Decision values `Σ_m θ_m Σ_j K^m(i, j) α_j y_j + b` from precomputed
/// cross blocks `K^m` (test rows × training columns).
pub fn decision_from_grams(blocks: &[Array2<f64>], theta: &[f64], signed_alpha: &[f64], bias: f64) -> Result<Vec<f64>> {
    if blocks.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: blocks.len(),
        });
    }
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let mut out = vec![0.0; rows];
    for (k, &w) in blocks.iter().zip(theta) {
        if w == 0.0 {
            continue;
        }
        if k.ncols() != signed_alpha.len() || k.nrows() != rows {
            return Err(Error::DimensionMismatch {
                expected: signed_alpha.len(),
                got: k.ncols(),
            });
        }
        for (i, row) in k.rows().into_iter().enumerate() {
            let s: f64 = row.iter().zip(signed_alpha).map(|(a, b)| a * b).sum();
            out[i] += w * s;
        }
    }
    for v in &mut out {
        *v += bias;
    }
    Ok(out)
}

/// Labels are `sign(f)` with `sign(0) = +1`.
pub fn predict(model: &MtlModel, task_id: &str, x_test: ArrayView2<f64>) -> Result<Prediction> {
    let t = &model.tasks[model.task_index(task_id)?];
    if model.kernels.len() != model.theta.len() {
        return Err(Error::Config("model does not carry the kernel specs needed for prediction".into()));
    }
    let x = match &model.standardizer {
        Some(s) => s.transform(x_test)?,
        None => x_test.to_owned(),
    };
    if x.ncols() != t.x.ncols() {
        return Err(Error::DimensionMismatch {
            expected: t.x.ncols(),
            got: x.ncols(),
        });
    }
    let blocks = model
        .kernels
        .iter()
        .zip(&model.theta.values)
        .map(|(spec, &w)| {
            if w == 0.0 {
                Ok(Array2::zeros((x.nrows(), t.x.nrows())))
            } else {
                compute_gram(spec, x.view(), t.x.view())
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let decision_values = decision_from_grams(&blocks, &model.theta.values, &t.dual.signed_alpha(&t.y), t.dual.bias)?;
    let labels = decision_values.iter().map(|f| if *f >= 0.0 { 1.0 } else { -1.0 }).collect();
    Ok(Prediction {
        labels,
        decision_values,
    })
}
