//! Grid-search cross-validation over precomputed Gram stacks.

use ndarray::Array2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{Grids, Method, TrainSection};
use crate::data::{stratified_folds, TaskDataset};
use crate::error::Result;
use crate::kernel::GramStack;
use crate::trainer::{budget_coefficients, decision_from_grams, fit_stacks, FitState, Mode, TrainConfig};

/// One grid point. `a_fraction` is set for Conic, `p_exp` for Pareto.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HyperParams {
    pub c: f64,
    pub p: f64,
    pub a_fraction: Option<f64>,
    pub p_exp: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOutcome {
    pub params: HyperParams,
    /// Mean validation accuracy; `None` when the grid had a single point and
    /// no training was done.
    pub score: Option<f64>,
}

/// Grid points in lexicographic order of (C, p, a or p_exp), each axis sorted
/// ascending, so the first maximum found is the preferred tie-break.
pub fn grid_points(method: Method, grids: &Grids) -> Vec<HyperParams> {
    let sorted = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        v.dedup();
        v
    };
    let mut out = Vec::new();
    for &c in &sorted(&grids.c) {
        for &p in &sorted(&grids.p) {
            match method {
                Method::Conic => out.extend(sorted(&grids.a_fraction).into_iter().map(|a| HyperParams {
                    c,
                    p,
                    a_fraction: Some(a),
                    p_exp: None,
                })),
                Method::Pareto => out.extend(sorted(&grids.p_exp).into_iter().map(|e| HyperParams {
                    c,
                    p,
                    a_fraction: None,
                    p_exp: Some(e),
                })),
                Method::Average | Method::Single => out.push(HyperParams {
                    c,
                    p,
                    a_fraction: None,
                    p_exp: None,
                }),
            }
        }
    }
    out
}

/// Training configuration for a method at a grid point; `stacks` fix the
/// budget scale `Σ_t ‖v_t‖_{p*}` for Conic.
pub fn train_config(method: Method, hp: &HyperParams, stacks: &[GramStack], section: &TrainSection, seed: u64) -> TrainConfig {
    let mode = match method {
        Method::Conic => Mode::Conic,
        Method::Average | Method::Single => Mode::Average,
        Method::Pareto => Mode::ParetoPath {
            p_exp: hp.p_exp.unwrap_or(1.0),
        },
    };
    let a = match hp.a_fraction {
        Some(f) => f * budget_coefficients(stacks, hp.p).iter().sum::<f64>(),
        None => 1.0,
    };
    TrainConfig {
        c: hp.c,
        p: hp.p,
        a,
        r_lambda: section.r_lambda,
        mode,
        use_bias: section.use_bias,
        tol_rel_obj: section.tol_rel_obj,
        max_outer_iters: section.max_outer_iters,
        seed,
        svm_tol: section.svm_tol,
        ..TrainConfig::default()
    }
}

/// Fits a method on stacks. Single-task training returns one state per task,
/// every other method one shared state.
pub fn fit_method(
    method: Method,
    hp: &HyperParams,
    stacks: &[GramStack],
    ys: &[&[f64]],
    section: &TrainSection,
    seed: u64,
) -> Result<Vec<FitState>> {
    if method == Method::Single {
        stacks
            .iter()
            .zip(ys)
            .map(|(s, y)| {
                let one = std::slice::from_ref(s);
                fit_stacks(one, std::slice::from_ref(y), &train_config(method, hp, one, section, seed))
            })
            .collect()
    } else {
        Ok(vec![fit_stacks(stacks, ys, &train_config(method, hp, stacks, section, seed))?])
    }
}

/// Per-task `(θ, α∘y, b)` of a fitted method.
pub fn task_predictors(method: Method, states: &[FitState], ys: &[&[f64]]) -> Vec<(Vec<f64>, Vec<f64>, f64)> {
    ys.iter()
        .enumerate()
        .map(|(t, y)| {
            let (state, k) = if method == Method::Single { (&states[t], 0) } else { (&states[0], t) };
            let d = &state.duals[k];
            (state.theta.values.clone(), d.signed_alpha(y), d.bias)
        })
        .collect()
}

pub(crate) fn accuracy(decisions: &[f64], y: &[f64]) -> f64 {
    let hits = decisions
        .iter()
        .zip(y)
        .filter(|(f, y)| (if **f >= 0.0 { 1.0 } else { -1.0 }) == **y)
        .count();
    hits as f64 / y.len() as f64
}

struct Fold {
    stacks: Vec<GramStack>,
    ys: Vec<Vec<f64>>,
    /// Per task: validation × training blocks for every kernel, and labels.
    val: Vec<(Vec<Array2<f64>>, Vec<f64>)>,
}

fn build_folds(tasks: &[TaskDataset], stacks: &[GramStack], folds: usize, seed: u64) -> Result<Vec<Fold>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let assignments = tasks
        .iter()
        .map(|t| stratified_folds(t, folds, rng.next_u64()))
        .collect::<Result<Vec<_>>>()?;
    (0..folds)
        .map(|k| {
            let mut fold = Fold {
                stacks: Vec::with_capacity(tasks.len()),
                ys: Vec::with_capacity(tasks.len()),
                val: Vec::with_capacity(tasks.len()),
            };
            for ((task, stack), assign) in tasks.iter().zip(stacks).zip(&assignments) {
                let (val_idx, train_idx): (Vec<usize>, Vec<usize>) = (0..task.len()).partition(|&i| assign[i] == k);
                fold.stacks.push(stack.subset(&train_idx)?);
                fold.ys.push(train_idx.iter().map(|&i| task.y[i]).collect());
                fold.val.push((
                    stack.cross_blocks(&val_idx, &train_idx),
                    val_idx.iter().map(|&i| task.y[i]).collect(),
                ));
            }
            Ok(fold)
        })
        .collect()
}

fn fold_score(method: Method, hp: &HyperParams, fold: &Fold, section: &TrainSection, seed: u64) -> Result<f64> {
    let ys: Vec<&[f64]> = fold.ys.iter().map(|y| y.as_slice()).collect();
    let states = fit_method(method, hp, &fold.stacks, &ys, section, seed)?;
    let preds = task_predictors(method, &states, &ys);
    let mut sum = 0.0;
    let mut count = 0;
    for ((theta, ay, b), (blocks, yv)) in preds.iter().zip(&fold.val) {
        if yv.is_empty() {
            continue;
        }
        let f = decision_from_grams(blocks, theta, ay, *b)?;
        sum += accuracy(&f, yv);
        count += 1;
    }
    Ok(sum / count.max(1) as f64)
}

/// Exhaustive grid search maximizing mean task accuracy averaged over
/// stratified folds. Ties go to the smaller C, then p, then a (or p_exp).
pub fn cross_validate(
    tasks: &[TaskDataset],
    stacks: &[GramStack],
    method: Method,
    grids: &Grids,
    folds: usize,
    seed: u64,
    section: &TrainSection,
) -> Result<CvOutcome> {
    let points = grid_points(method, grids);
    if points.len() == 1 {
        return Ok(CvOutcome {
            params: points[0],
            score: None,
        });
    }
    let fold_data = build_folds(tasks, stacks, folds, seed)?;
    let scores = points
        .par_iter()
        .map(|hp| {
            let mut total = 0.0;
            for f in &fold_data {
                total += fold_score(method, hp, f, section, seed)?;
            }
            Ok(total / fold_data.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok(CvOutcome {
        params: points[best],
        score: Some(scores[best]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_multitask, SynthSpec};
    use crate::kernel::KernelSpec;
    use crate::trainer::build_stacks;

    fn setup() -> (Vec<TaskDataset>, Vec<GramStack>) {
        let tasks = synth_multitask(&SynthSpec {
            tasks: 2,
            n: 16,
            d: 2,
            similarity: 0.8,
            noise: 0.5,
            seed: 3,
        })
        .unwrap()
        .tasks;
        let stacks = build_stacks(&tasks, &[KernelSpec::gaussian(1.0)]).unwrap();
        (tasks, stacks)
    }

    #[test]
    fn grid_sizes() {
        let g = Grids::default();
        assert_eq!(grid_points(Method::Conic, &g).len(), 112);
        assert_eq!(grid_points(Method::Pareto, &g).len(), 112);
        assert_eq!(grid_points(Method::Average, &g).len(), 28);
        let first = grid_points(Method::Conic, &g)[0];
        assert_eq!((first.c, first.p, first.a_fraction), (0.125, 1.0, Some(0.25)));
    }

    #[test]
    fn one_point_grid_skips_training() {
        let (tasks, stacks) = setup();
        let g = Grids {
            c: vec![2.0],
            p: vec![2.0],
            ..Grids::default()
        };
        let out = cross_validate(&tasks, &stacks, Method::Average, &g, 100, 0, &TrainSection::default()).unwrap();
        // 100 folds would be degenerate; a single point never builds them
        assert_eq!(out.score, None);
        assert_eq!(out.params.c, 2.0);
    }

    #[test]
    fn irrelevant_p_ties_to_smallest() {
        let (tasks, stacks) = setup();
        let g = Grids {
            c: vec![1.0],
            p: vec![2.0, 1.0],
            ..Grids::default()
        };
        let out = cross_validate(&tasks, &stacks, Method::Average, &g, 2, 5, &TrainSection::default()).unwrap();
        assert_eq!(out.params.p, 1.0);
    }

    #[test]
    fn two_fold_score_ignores_fold_order() {
        let (tasks, stacks) = setup();
        let hp = grid_points(Method::Conic, &Grids::default())[40];
        let section = TrainSection::default();
        let mut folds = build_folds(&tasks, &stacks, 2, 8).unwrap();
        let forward: Vec<f64> = folds
            .iter()
            .map(|f| fold_score(Method::Conic, &hp, f, &section, 0).unwrap())
            .collect();
        folds.reverse();
        let backward: Vec<f64> = folds
            .iter()
            .map(|f| fold_score(Method::Conic, &hp, f, &section, 0).unwrap())
            .collect();
        assert_eq!(forward[0] + forward[1], backward[0] + backward[1]);
        assert_eq!(forward[0], backward[1]);
    }

    #[test]
    fn fold_degeneracy_is_an_error() {
        let (tasks, stacks) = setup();
        let g = Grids {
            c: vec![1.0, 2.0],
            ..Grids::default()
        };
        assert!(cross_validate(&tasks, &stacks, Method::Average, &g, 9, 0, &TrainSection::default()).is_err());
    }
}
