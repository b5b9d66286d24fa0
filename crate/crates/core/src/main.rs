use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use conic_mtl::bounds::{bound_report, radcheck, BoundOptions, McOptions};
use conic_mtl::data::{build_ovo_tasks, load_sparse_text, read_multitask_dir, MultiTaskDataset, TaskDataset};
use conic_mtl::experiment::{
    load_config, load_dataset, read_results, render_summary, run_experiment, summarize, train_config, write_outputs,
    ExperimentConfig, HyperParams, Method, TrainSection,
};
use conic_mtl::kernel::cache::GramCache;
use conic_mtl::kernel::{dictionary, GramStack};
use conic_mtl::trainer::{fit, predict, prepare, MtlModel};
use conic_mtl::{Error, Result};

#[derive(Parser)]
#[command(name = "conic-mtl", version, about = "Conic multi-task multiple-kernel learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Precompute Gram matrices into a cache directory.
    Gram {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        cache: PathBuf,
    },
    /// Train one model on a full dataset.
    Train(TrainArgs),
    /// Predict labels for a dataset with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Multi-task directory, or a sparse file when `--task` is given.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        task: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the generalization bounds of a saved model.
    Bound {
        #[arg(long)]
        model: PathBuf,
        /// Multi-task directory with held-out samples.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value_t = 10_000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write a CSV row instead of `name value` lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized verification of the Rademacher estimator properties.
    Radcheck {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a configured experiment and write result CSVs.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Config override `key=value`, dotted keys for nested sections.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        bounds: bool,
        #[arg(long)]
        wall_time: bool,
        #[arg(long, default_value = "results")]
        output: PathBuf,
    },
    /// Summarize a results CSV with significance tests.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Pair runs by seed instead of Welch's unpaired test.
        #[arg(long)]
        paired: bool,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Experiment config supplying the dataset and training section.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Multi-task directory or multi-class sparse file; overrides the config.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Conic,
    Average,
    Pareto,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "conic")]
    method: MethodArg,
    #[arg(long = "C", default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Budget as a fraction of the λ = 1 value (conic only).
    #[arg(long, default_value_t = 1.0)]
    a_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    p_exp: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reuse Gram matrices from this cache directory.
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn load_path(path: &Path) -> Result<MultiTaskDataset> {
    if path.is_dir() {
        read_multitask_dir(path)
    } else {
        build_ovo_tasks(&load_sparse_text(path, None)?, &path.display().to_string())
    }
}

fn resolve_data(args: &DataArgs) -> Result<(MultiTaskDataset, TrainSection)> {
    let cfg: Option<ExperimentConfig> = match &args.config {
        Some(p) => Some(load_config(p, &args.overrides)?),
        None => None,
    };
    let section = cfg.as_ref().map(|c| c.train.clone()).unwrap_or_default();
    let data = match (&args.data, &cfg) {
        (Some(p), _) => load_path(p)?,
        (None, Some(c)) => load_dataset(&c.dataset)?,
        (None, None) => return Err(Error::Config("either --data or --config is required".into())),
    };
    Ok((data, section))
}

fn stacks_for(tasks: &[TaskDataset], section: &TrainSection, cache: Option<&Path>) -> Result<Vec<GramStack>> {
    let kernels = dictionary(section.spread_convention);
    let Some(dir) = cache else {
        return conic_mtl::trainer::build_stacks(tasks, &kernels);
    };
    let cache = GramCache::new(dir)?;
    let mut hits = 0;
    let mut stacks = Vec::with_capacity(tasks.len());
    for t in tasks {
        let mut grams = Vec::with_capacity(kernels.len());
        for k in &kernels {
            let (g, hit) = cache.get_or_compute(t.x.view(), k)?;
            hits += usize::from(hit);
            grams.push(g);
        }
        stacks.push(GramStack::new(t.task_id.clone(), grams)?);
    }
    log::info!("gram cache: {hits} of {} entries reused", tasks.len() * kernels.len());
    Ok(stacks)
}

fn cmd_gram(args: &DataArgs, cache: &Path) -> Result<()> {
    let (data, section) = resolve_data(args)?;
    let (tasks, _) = prepare(&data.tasks, section.standardize)?;
    let stacks = stacks_for(&tasks, &section, Some(cache))?;
    for s in &stacks {
        println!("{} n={} kernels={}", s.task_id(), s.num_samples(), s.num_kernels());
    }
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let (data, section) = resolve_data(&args.data)?;
    let (tasks, standardizer) = prepare(&data.tasks, section.standardize)?;
    let stacks = stacks_for(&tasks, &section, args.cache.as_deref())?;
    let (method, hp) = match args.method {
        MethodArg::Conic => (Method::Conic, (Some(args.a_fraction), None)),
        MethodArg::Average => (Method::Average, (None, None)),
        MethodArg::Pareto => (Method::Pareto, (None, Some(args.p_exp))),
    };
    let hp = HyperParams {
        c: args.c,
        p: args.p,
        a_fraction: hp.0,
        p_exp: hp.1,
    };
    let cfg = train_config(method, &hp, &stacks, &section, args.seed);
    let mut model = fit(&tasks, &stacks, &dictionary(section.spread_convention), &cfg)?;
    model.standardizer = standardizer;
    model.save(&args.out)?;
    println!(
        "outer_iterations {}\nconverged {}\nobjective {}\ntheta {:?}\nlambda {:?}",
        model.outer_iterations,
        model.converged,
        model.objective(),
        model.theta.values,
        model.lambda.values
    );
    Ok(())
}

fn cmd_predict(model: &Path, data: &Path, task: Option<&str>, out: Option<&Path>) -> Result<()> {
    let model = MtlModel::load(model)?;
    let tasks = match task {
        Some(id) => {
            let s = load_sparse_text(data, Some(model.tasks[0].x.ncols()))?;
            let y = s.labels.iter().map(|l| if *l > 0.0 { 1.0 } else { -1.0 }).collect();
            vec![TaskDataset::new(id, s.x, y, Default::default())?]
        }
        None => read_multitask_dir(data)?.tasks,
    };
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(File::create(p).map_err(|e| Error::io(p, e))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut wr = csv::Writer::from_writer(&mut w);
    wr.write_record(["task", "index", "label", "decision_value"])?;
    for t in &tasks {
        let pred = predict(&model, &t.task_id, t.x.view())?;
        for (i, (l, f)) in pred.labels.iter().zip(&pred.decision_values).enumerate() {
            wr.write_record([t.task_id.clone(), i.to_string(), l.to_string(), f.to_string()])?;
        }
    }
    wr.flush().map_err(|e| Error::Format(e.to_string()))?;
    Ok(())
}

fn cmd_bound(model: &Path, test: Option<&Path>, opts: BoundOptions, out: Option<&Path>) -> Result<()> {
    let model = MtlModel::load(model)?;
    let test = match test {
        Some(p) => Some(read_multitask_dir(p)?.tasks),
        None => None,
    };
    let report = bound_report(&model, test.as_deref(), &opts)?;
    match out {
        Some(p) => report.write_csv(File::create(p).map_err(|e| Error::io(p, e))?, true)?,
        None => print!("{}", report.to_kv()),
    }
    Ok(())
}

fn cmd_radcheck(instances: usize, seed: u64) -> Result<bool> {
    let mut ok = true;
    for c in radcheck::run_all(instances, seed)? {
        println!(
            "{} {}: {} comparisons, {} violations, worst excess {:e}",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.comparisons,
            c.violations,
            c.worst_excess
        );
        ok &= c.passed();
    }
    Ok(ok)
}

#[allow(clippy::too_many_arguments)]
fn cmd_experiment(
    config: &Path,
    overrides: &[String],
    runs: Option<usize>,
    seed: Option<u64>,
    folds: Option<usize>,
    bounds: bool,
    wall_time: bool,
    output: &Path,
) -> Result<()> {
    let mut ov = overrides.to_vec();
    if let Some(r) = runs {
        ov.push(format!("runs={r}"));
    }
    if let Some(s) = seed {
        ov.push(format!("seed={s}"));
    }
    if let Some(f) = folds {
        ov.push(format!("cv_folds={f}"));
    }
    if bounds {
        ov.push("bound.enabled=true".into());
    }
    if wall_time {
        ov.push("record_wall_time=true".into());
    }
    let cfg = load_config(config, &ov)?;
    let out = run_experiment(&cfg)?;
    let path = write_outputs(&out, output, &cfg.name)?;
    print!("{}", render_summary(&summarize(&out.rows, 0.05, false)));
    println!("results written to {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Gram { data, cache } => cmd_gram(&data, &cache)?,
        Command::Train(args) => cmd_train(&args)?,
        Command::Predict { model, data, task, out } => cmd_predict(&model, &data, task.as_deref(), out.as_deref())?,
        Command::Bound {
            model,
            test,
            delta,
            rho,
            mc_samples,
            seed,
            out,
        } => {
            let opts = BoundOptions {
                delta,
                rho,
                mc: McOptions {
                    samples: mc_samples,
                    seed,
                },
            };
            cmd_bound(&model, test.as_deref(), opts, out.as_deref())?
        }
        Command::Radcheck { instances, seed } => return cmd_radcheck(instances, seed),
        Command::Experiment {
            config,
            overrides,
            runs,
            seed,
            folds,
            bounds,
            wall_time,
            output,
        } => cmd_experiment(&config, &overrides, runs, seed, folds, bounds, wall_time, &output)?,
        Command::Report { results, alpha, paired } => {
            let rows = read_results(&results)?;
            print!("{}", render_summary(&summarize(&rows, alpha, paired)));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
