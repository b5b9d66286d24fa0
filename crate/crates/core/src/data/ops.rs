use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LabeledSamples, MultiTaskDataset, Provenance, TaskDataset};
use crate::error::{Error, Result};

/// One binary task per unordered class pair, pairs in ascending class order.
/// In task `ovo_a_b` (a < b) class `a` is +1 and class `b` is -1.
pub fn build_ovo_tasks(samples: &LabeledSamples, source: &str) -> Result<MultiTaskDataset> {
    let classes = samples.classes();
    if classes.len() < 2 {
        return Err(Error::invalid(format!(
            "one-vs-one needs at least 2 classes, found {}",
            classes.len()
        )));
    }
    let mut tasks = Vec::with_capacity(classes.len() * (classes.len() - 1) / 2);
    for (i, &a) in classes.iter().enumerate() {
        for &b in &classes[i + 1..] {
            let idx: Vec<usize> = (0..samples.labels.len())
                .filter(|&k| samples.labels[k] == a || samples.labels[k] == b)
                .collect();
            let y = idx
                .iter()
                .map(|&k| if samples.labels[k] == a { 1.0 } else { -1.0 })
                .collect();
            let x = samples.x.select(ndarray::Axis(0), &idx);
            tasks.push(TaskDataset::new(
                format!("ovo_{a}_{b}"),
                x,
                y,
                Provenance::new(source, None),
            )?);
        }
    }
    MultiTaskDataset::new(tasks)
}

fn class_indices(task: &TaskDataset) -> (Vec<usize>, Vec<usize>) {
    (0..task.len()).partition(|&i| task.y[i] > 0.0)
}

/// Subsamples the majority class without replacement down to the minority
/// count. Retained samples keep their original order.
pub fn balanced_resample(task: &TaskDataset, seed: u64) -> Result<TaskDataset> {
    task.require_both_classes()?;
    let (pos, neg) = class_indices(task);
    let (minority, majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = index::sample(&mut rng, majority.len(), minority.len());
    let mut keep: Vec<usize> = minority;
    keep.extend(chosen.iter().map(|i| majority[i]));
    keep.sort_unstable();
    let mut out = task.subset(&keep);
    out.provenance.seed = Some(seed);
    Ok(out)
}

/// Per-class split with `round(fraction · n_c)` training samples of class
/// `c`. Both halves keep the original sample order.
pub fn stratified_split(task: &TaskDataset, fraction: f64, seed: u64) -> Result<(TaskDataset, TaskDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let (pos, neg) = class_indices(task);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (name, mut idx) in [("positive", pos), ("negative", neg)] {
        if idx.is_empty() {
            continue;
        }
        let want = fraction * idx.len() as f64;
        if want < 1.0 {
            return Err(Error::DegenerateTask {
                task: task.task_id.clone(),
                reason: format!(
                    "fraction {fraction} of {} {name} samples leaves no training sample",
                    idx.len()
                ),
            });
        }
        idx.shuffle(&mut rng);
        let n = (want.round() as usize).min(idx.len());
        train.extend_from_slice(&idx[..n]);
        test.extend_from_slice(&idx[n..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    let mut tr = task.subset(&train);
    let mut te = task.subset(&test);
    tr.provenance.seed = Some(seed);
    te.provenance.seed = Some(seed);
    Ok((tr, te))
}

/// Stratified fold labels: entry `i` is the fold holding sample `i` out.
/// Every class must have at least `folds` samples.
pub fn stratified_folds(task: &TaskDataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    let (pos, neg) = class_indices(task);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; task.len()];
    for mut idx in [pos, neg] {
        if idx.len() < folds {
            return Err(Error::DegenerateTask {
                task: task.task_id.clone(),
                reason: format!("a class has {} samples, fewer than {folds} folds", idx.len()),
            });
        }
        idx.shuffle(&mut rng);
        for (k, i) in idx.into_iter().enumerate() {
            assignment[i] = k % folds;
        }
    }
    Ok(assignment)
}
