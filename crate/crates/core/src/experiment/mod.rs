//! Repeated train/test experiments with cross-validated hyperparameters.

mod config;
mod cv;
mod report;
mod stats;

pub use config::{
    apply_override, load_config, parse_config, BoundSection, DatasetSpec, ExperimentConfig, Grids, Method, TrainSection,
};
pub use cv::{cross_validate, fit_method, grid_points, task_predictors, train_config, CvOutcome, HyperParams};
pub use report::{render_summary, summarize, SummaryRow};
pub use stats::{paired_t_test, welch_t_test, TTest};

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{bound_report, BoundOptions, BoundReport, McOptions};
use crate::data::{
    balanced_resample, build_ovo_tasks, load_sparse_text, read_multitask_dir, stratified_split, synth_multitask,
    MultiTaskDataset, TaskDataset,
};
use crate::error::{Error, Result};
use crate::kernel::{dictionary, KernelSpec};
use crate::trainer::{build_stacks, fit, fit_single_task, predict, prepare, MtlModel};

pub const RESULTS_HEADER: &str = "dataset,fraction,method,seed,mean_accuracy,C,p,a,p_exp,wall_ms,converged";

/// One (fraction, run, method) outcome. A failed run has NaN accuracy and
/// `converged = false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub fraction: f64,
    pub method: Method,
    pub seed: u64,
    pub mean_accuracy: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub p: f64,
    pub a: Option<f64>,
    pub p_exp: Option<f64>,
    pub wall_ms: u64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRow {
    pub dataset: String,
    pub fraction: f64,
    pub method: Method,
    pub seed: u64,
    pub task: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub dataset: String,
    pub fraction: f64,
    pub method: Method,
    pub seed: u64,
    pub report: BoundReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub tasks: Vec<TaskRow>,
    pub bounds: Vec<BoundRow>,
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<MultiTaskDataset> {
    match spec {
        DatasetSpec::Synthetic { .. } => synth_multitask(&spec.synth_spec().expect("synthetic spec")),
        DatasetSpec::MultitaskDir { path } => read_multitask_dir(path),
        DatasetSpec::Multiclass { path } => {
            let samples = load_sparse_text(path, None)?;
            build_ovo_tasks(&samples, &path.display().to_string())
        }
    }
}

/// Seed of run `run` at fraction index `fraction_index`; independent of the
/// number of runs and fractions in the config.
pub fn run_seed(master: u64, fraction_index: usize, run: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((fraction_index as u64) << 32) | run as u64);
    rng.next_u64()
}

struct Split {
    train: Vec<TaskDataset>,
    test: Vec<TaskDataset>,
}

fn split_run(cfg: &ExperimentConfig, data: &MultiTaskDataset, fraction: f64, rng: &mut ChaCha8Rng) -> Result<Split> {
    let mut train = Vec::with_capacity(data.tasks.len());
    let mut test = Vec::with_capacity(data.tasks.len());
    for task in &data.tasks {
        let balance_seed = rng.next_u64();
        let split_seed = rng.next_u64();
        let task = if cfg.balance {
            balanced_resample(task, balance_seed)?
        } else {
            task.clone()
        };
        let (tr, te) = stratified_split(&task, fraction, split_seed)?;
        train.push(tr);
        test.push(te);
    }
    let (train, standardizer) = prepare(&train, cfg.train.standardize)?;
    if let Some(s) = standardizer {
        for t in &mut test {
            t.x = s.transform(t.x.view())?;
        }
    }
    Ok(Split { train, test })
}

struct MethodResult {
    params: HyperParams,
    a: Option<f64>,
    accuracies: Vec<f64>,
    converged: bool,
    bound: Option<BoundReport>,
}

fn task_accuracy(model: &MtlModel, task: &TaskDataset) -> Result<f64> {
    let pred = predict(model, &task.task_id, task.x.view())?;
    Ok(cv::accuracy(&pred.decision_values, &task.y))
}

fn run_method(
    cfg: &ExperimentConfig,
    method: Method,
    split: &Split,
    stacks: &[crate::kernel::GramStack],
    kernels: &[KernelSpec],
    cv_seed: u64,
    seed: u64,
) -> Result<MethodResult> {
    let cv = cross_validate(&split.train, stacks, method, &cfg.grids, cfg.cv_folds, cv_seed, &cfg.train)?;
    let hp = cv.params;
    if method == Method::Single {
        let mut accuracies = Vec::with_capacity(split.train.len());
        let mut converged = true;
        for ((train, stack), test) in split.train.iter().zip(stacks).zip(&split.test) {
            let tc = train_config(method, &hp, std::slice::from_ref(stack), &cfg.train, seed);
            let model = fit_single_task(train, stack, kernels, &tc)?;
            converged &= model.converged;
            accuracies.push(task_accuracy(&model, test)?);
        }
        return Ok(MethodResult {
            params: hp,
            a: None,
            accuracies,
            converged,
            bound: None,
        });
    }
    let tc = train_config(method, &hp, stacks, &cfg.train, seed);
    let model = fit(&split.train, stacks, kernels, &tc)?;
    let accuracies = split
        .test
        .iter()
        .map(|t| task_accuracy(&model, t))
        .collect::<Result<Vec<_>>>()?;
    let bound = if cfg.bound.enabled {
        let opts = BoundOptions {
            delta: cfg.bound.delta,
            rho: cfg.bound.rho,
            mc: McOptions {
                samples: cfg.bound.mc_samples,
                seed,
            },
        };
        Some(bound_report(&model, Some(&split.test), &opts)?)
    } else {
        None
    };
    Ok(MethodResult {
        params: hp,
        a: hp.a_fraction.map(|_| tc.a),
        accuracies,
        converged: model.converged,
        bound,
    })
}

fn run_one(cfg: &ExperimentConfig, data: &MultiTaskDataset, kernels: &[KernelSpec], fi: usize, run: usize) -> ExperimentOutput {
    let fraction = cfg.fractions[fi];
    let seed = run_seed(cfg.seed, fi, run);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prepared = split_run(cfg, data, fraction, &mut rng).and_then(|s| {
        let stacks = build_stacks(&s.train, kernels)?;
        Ok((s, stacks))
    });
    let cv_seed = rng.next_u64();
    let mut out = ExperimentOutput::default();
    for &method in &cfg.methods {
        let start = Instant::now();
        let result = prepared
            .as_ref()
            .map_err(|e| Error::Config(e.to_string()))
            .and_then(|(split, stacks)| run_method(cfg, method, split, stacks, kernels, cv_seed, seed));
        let wall_ms = if cfg.record_wall_time {
            start.elapsed().as_millis() as u64
        } else {
            0
        };
        let mut row = ResultRow {
            dataset: cfg.name.clone(),
            fraction,
            method,
            seed,
            mean_accuracy: f64::NAN,
            c: f64::NAN,
            p: f64::NAN,
            a: None,
            p_exp: None,
            wall_ms,
            converged: false,
        };
        match result {
            Ok(r) => {
                row.mean_accuracy = r.accuracies.iter().sum::<f64>() / r.accuracies.len() as f64;
                row.c = r.params.c;
                row.p = r.params.p;
                row.a = r.a;
                row.p_exp = r.params.p_exp;
                row.converged = r.converged;
                let (split, _) = prepared.as_ref().expect("method succeeded");
                for (t, acc) in split.test.iter().zip(&r.accuracies) {
                    out.tasks.push(TaskRow {
                        dataset: cfg.name.clone(),
                        fraction,
                        method,
                        seed,
                        task: t.task_id.clone(),
                        accuracy: *acc,
                    });
                }
                if let Some(report) = r.bound {
                    out.bounds.push(BoundRow {
                        dataset: cfg.name.clone(),
                        fraction,
                        method,
                        seed,
                        report,
                    });
                }
            }
            Err(e) => log::warn!("{} fraction {fraction} run {run} {}: {e}", cfg.name, method.name()),
        }
        out.rows.push(row);
    }
    out
}

/// Runs every (fraction, run) pair in parallel. Output order is fixed:
/// fraction, then run, then method in config order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let data = load_dataset(&cfg.dataset)?;
    let kernels = dictionary(cfg.train.spread_convention);
    let jobs: Vec<(usize, usize)> = (0..cfg.fractions.len())
        .flat_map(|fi| (0..cfg.runs).map(move |r| (fi, r)))
        .collect();
    let parts: Vec<ExperimentOutput> = jobs
        .par_iter()
        .map(|&(fi, r)| {
            log::info!("{}: fraction {} run {}", cfg.name, cfg.fractions[fi], r);
            run_one(cfg, &data, &kernels, fi, r)
        })
        .collect();
    let mut out = ExperimentOutput::default();
    for p in parts {
        out.rows.extend(p.rows);
        out.tasks.extend(p.tasks);
        out.bounds.extend(p.bounds);
    }
    Ok(out)
}

pub fn write_results<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    if rows.is_empty() {
        wr.write_record(RESULTS_HEADER.split(','))?;
    }
    wr.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header = rd.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != RESULTS_HEADER {
        return Err(Error::Format(format!("{}: unexpected header {header:?}", path.display())));
    }
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

fn write_tasks<W: Write>(rows: &[TaskRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

fn write_bounds<W: Write>(rows: &[BoundRow], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["dataset", "fraction", "method", "seed"];
    header.extend(BoundReport::csv_header());
    wr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.dataset.clone(), r.fraction.to_string(), r.method.name().to_string(), r.seed.to_string()];
        rec.extend(r.report.fields().into_iter().map(|(_, v)| v));
        wr.write_record(&rec)?;
    }
    wr.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

/// Writes `<name>_results.csv`, `<name>_tasks.csv` and, when bounds were
/// computed, `<name>_bounds.csv` into `dir`. Returns the results path.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |file: String| {
        let path = dir.join(file);
        File::create(&path).map(|f| (path.clone(), f)).map_err(|e| Error::io(&path, e))
    };
    let (results, f) = create(format!("{name}_results.csv"))?;
    write_results(&out.rows, f)?;
    let (_, f) = create(format!("{name}_tasks.csv"))?;
    write_tasks(&out.tasks, f)?;
    if !out.bounds.is_empty() {
        let (_, f) = create(format!("{name}_bounds.csv"))?;
        write_bounds(&out.bounds, f)?;
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = r#"
name = "toy"
fractions = [0.5]
methods = ["conic", "average", "pareto", "single"]
runs = 2
cv_folds = 2
seed = 9

[dataset]
kind = "synthetic"
tasks = 2
n = 20
d = 2
similarity = 0.7
noise = 0.3
seed = 4

[grids]
c = [1.0]
p = [2.0]
a_fraction = [0.5]
p_exp = [0.5]

[bound]
enabled = true
mc_samples = 200
"#;

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(run_seed(1, 0, 0), run_seed(1, 0, 0));
        assert_ne!(run_seed(1, 0, 0), run_seed(1, 0, 1));
        assert_ne!(run_seed(1, 0, 0), run_seed(1, 1, 0));
        assert_ne!(run_seed(1, 0, 0), run_seed(2, 0, 0));
    }

    #[test]
    fn toy_experiment_round_trips() {
        let cfg = parse_config(TOY, &[]).unwrap();
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 8);
        assert_eq!(out.tasks.len(), 16);
        assert_eq!(out.bounds.len(), 6);
        assert!(out.rows.iter().all(|r| r.mean_accuracy.is_finite() && r.wall_ms == 0));
        let conic = &out.rows[0];
        assert_eq!(conic.method, Method::Conic);
        assert!(conic.a.unwrap() > 0.0);
        assert_eq!(out.rows[2].p_exp, Some(0.5));

        let mut buf = Vec::new();
        write_results(&out.rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&format!("{RESULTS_HEADER}\n")));
        let dir = tempfile::tempdir().unwrap();
        let path = write_outputs(&out, dir.path(), "toy").unwrap();
        assert_eq!(read_results(&path).unwrap(), out.rows);
        assert!(dir.path().join("toy_bounds.csv").exists());

        let again = run_experiment(&cfg).unwrap();
        assert_eq!(again.rows, out.rows);
    }

    #[test]
    fn separable_average_run_is_perfect() {
        let cfg = parse_config(
            TOY,
            &[
                "methods=[\"average\"]".into(),
                "runs=1".into(),
                "dataset.noise=0.0".into(),
                "dataset.n=80".into(),
                "grids.c=[100.0]".into(),
                "bound.enabled=false".into(),
            ],
        )
        .unwrap();
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.rows[0].mean_accuracy, 1.0);
    }

    #[test]
    fn failed_runs_become_rows() {
        // 2 samples per task cannot be split at 10%
        let cfg = parse_config(TOY, &["dataset.n=2".into(), "fractions=[0.1]".into(), "runs=1".into()]).unwrap();
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 4);
        assert!(out.rows.iter().all(|r| r.mean_accuracy.is_nan() && !r.converged));
        assert!(out.tasks.is_empty());
    }
}
