//! Labeled sample sets, SVMlight text IO, one-vs-one task construction,
//! resampling, splits and a synthetic multi-task generator.

mod container;
mod ops;
mod sparse;
mod synth;

pub use container::{read_multitask_dir, write_multitask_dir, Manifest};
pub use ops::{balanced_resample, build_ovo_tasks, stratified_folds, stratified_split};
pub use sparse::{load_sparse_text, parse_sparse_text, write_sparse_text, LabeledSamples};
pub use synth::{synth_multitask, SynthSpec};

use std::collections::HashSet;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Where a task's samples came from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(source: impl Into<String>, seed: Option<u64>) -> Self {
        Provenance {
            source: source.into(),
            seed,
        }
    }
}

/// One binary task: `N × d` features and ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskDataset {
    pub task_id: String,
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub provenance: Provenance,
}

impl TaskDataset {
    pub fn new(task_id: impl Into<String>, x: Array2<f64>, y: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let task_id = task_id.into();
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("task features"));
        }
        if y.iter().any(|v| *v != 1.0 && *v != -1.0) {
            return Err(Error::invalid(format!("task {task_id}: labels must be ±1")));
        }
        Ok(TaskDataset {
            task_id,
            x,
            y,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// `(positives, negatives)`
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.y.iter().filter(|v| **v > 0.0).count();
        (pos, self.y.len() - pos)
    }

    pub fn require_both_classes(&self) -> Result<()> {
        let (pos, neg) = self.class_counts();
        if pos == 0 || neg == 0 {
            return Err(Error::DegenerateTask {
                task: self.task_id.clone(),
                reason: format!("{pos} positive and {neg} negative samples"),
            });
        }
        Ok(())
    }

    /// Rows `idx` in the given order.
    pub fn subset(&self, idx: &[usize]) -> TaskDataset {
        TaskDataset {
            task_id: self.task_id.clone(),
            x: self.x.select(Axis(0), idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// SHA-256 over labels and features, identifying the training sample set.
    pub fn sample_hash(&self) -> String {
        sample_hash(self.x.view(), &self.y)
    }
}

pub(crate) fn sample_hash(x: ArrayView2<f64>, y: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update((x.nrows() as u64).to_le_bytes());
    h.update((x.ncols() as u64).to_le_bytes());
    for v in y {
        h.update(v.to_le_bytes());
    }
    for v in x.iter() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Tasks sharing one feature dimension, with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskDataset {
    pub tasks: Vec<TaskDataset>,
    pub dim: usize,
}

impl MultiTaskDataset {
    pub fn new(tasks: Vec<TaskDataset>) -> Result<Self> {
        let dim = tasks.first().map(|t| t.dim()).ok_or_else(|| Error::invalid("no tasks"))?;
        let mut seen = HashSet::new();
        for t in &tasks {
            if t.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: t.dim(),
                });
            }
            if !seen.insert(t.task_id.clone()) {
                return Err(Error::invalid(format!("duplicate task id {}", t.task_id)));
            }
        }
        Ok(MultiTaskDataset { tasks, dim })
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn task(&self, id: &str) -> Option<&TaskDataset> {
        self.tasks.iter().find(|t| t.task_id == id)
    }

    /// All tasks' feature rows stacked in task order.
    pub fn stacked_features(&self) -> Array2<f64> {
        let views: Vec<_> = self.tasks.iter().map(|t| t.x.view()).collect();
        ndarray::concatenate(Axis(0), &views).expect("tasks share the feature dimension")
    }
}
