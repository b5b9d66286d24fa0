//! Experiment configuration (TOML) with dotted-key overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SynthSpec;
use crate::error::{Error, Result};
use crate::kernel::SpreadConvention;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Conic,
    Average,
    #[serde(alias = "pareto_path")]
    Pareto,
    #[serde(alias = "single_task")]
    Single,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Conic => "conic",
            Method::Average => "average",
            Method::Pareto => "pareto",
            Method::Single => "single",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "conic" => Ok(Method::Conic),
            "average" => Ok(Method::Average),
            "pareto" | "pareto_path" => Ok(Method::Pareto),
            "single" | "single_task" => Ok(Method::Single),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        tasks: usize,
        n: usize,
        d: usize,
        similarity: f64,
        noise: f64,
        seed: u64,
    },
    /// Directory with `manifest.toml` and `task_<id>.txt` files.
    MultitaskDir { path: PathBuf },
    /// One multi-class SVMlight file, split one-vs-one.
    Multiclass { path: PathBuf },
}

impl DatasetSpec {
    pub fn synth_spec(&self) -> Option<SynthSpec> {
        match *self {
            DatasetSpec::Synthetic {
                tasks,
                n,
                d,
                similarity,
                noise,
                seed,
            } => Some(SynthSpec {
                tasks,
                n,
                d,
                similarity,
                noise,
                seed,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub c: Vec<f64>,
    pub p: Vec<f64>,
    /// Budget `a` as a fraction of `Σ_t ‖v_t‖_{p*}`.
    pub a_fraction: Vec<f64>,
    pub p_exp: Vec<f64>,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            c: (-3..=3).map(|e| 2f64.powi(e)).collect(),
            p: vec![1.0, 4.0 / 3.0, 2.0, 4.0],
            a_fraction: vec![0.25, 0.5, 0.75, 1.0],
            p_exp: vec![0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub r_lambda: f64,
    pub use_bias: bool,
    pub tol_rel_obj: f64,
    pub max_outer_iters: usize,
    pub svm_tol: f64,
    pub spread_convention: SpreadConvention,
    pub standardize: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            r_lambda: 8.0,
            use_bias: false,
            tol_rel_obj: 1e-5,
            max_outer_iters: 50,
            svm_tol: 1e-10,
            spread_convention: SpreadConvention::Sigma,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundSection {
    pub enabled: bool,
    pub delta: f64,
    pub rho: f64,
    pub mc_samples: usize,
}

impl Default for BoundSection {
    fn default() -> Self {
        BoundSection {
            enabled: false,
            delta: 0.05,
            rho: 1.0,
            mc_samples: 10_000,
        }
    }
}

fn default_runs() -> usize {
    20
}

fn default_folds() -> usize {
    5
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub fractions: Vec<f64>,
    pub methods: Vec<Method>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub seed: u64,
    /// Subsample the majority class of every task before splitting.
    #[serde(default = "default_true")]
    pub balance: bool,
    /// Record wall-clock milliseconds in the results; off keeps output
    /// byte-reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub bound: BoundSection,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2".into());
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        if self.fractions.is_empty() || self.fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return bad("fractions must be non-empty and lie in (0, 1)".into());
        }
        let g = &self.grids;
        if g.c.is_empty() || g.p.is_empty() || g.a_fraction.is_empty() || g.p_exp.is_empty() {
            return bad("every grid must be non-empty".into());
        }
        if g.c.iter().any(|c| !(*c > 0.0)) || g.p.iter().any(|p| !(*p >= 1.0)) {
            return bad("grid values for C must be positive and p >= 1".into());
        }
        if g.a_fraction.iter().any(|a| !(*a > 0.0)) {
            return bad("a_fraction values must be positive".into());
        }
        if g.a_fraction.iter().any(|a| *a * self.train.r_lambda < 1.0) {
            return bad(format!(
                "a_fraction below 1/r_lambda = {} is infeasible",
                1.0 / self.train.r_lambda
            ));
        }
        if g.p_exp.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return bad("p_exp values must lie in (0, 1]".into());
        }
        Ok(())
    }

    /// Resolves relative dataset paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        match &mut self.dataset {
            DatasetSpec::MultitaskDir { path } | DatasetSpec::Multiclass { path } => {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
            DatasetSpec::Synthetic { .. } => {}
        }
    }
}

/// Parses `text` as TOML, applies `key=value` overrides (dotted keys, values
/// parsed as TOML with a bare-string fallback) and deserializes.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    for ov in overrides {
        apply_override(&mut doc, ov)?;
    }
    let cfg: ExperimentConfig = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config file; relative dataset paths are taken relative to the
/// file's directory.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config(&text, overrides)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}

pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut table = doc;
    for part in parents {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?}: {part:?} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "toy"
fractions = [0.5]
methods = ["conic", "average"]

[dataset]
kind = "synthetic"
tasks = 2
n = 20
d = 3
similarity = 0.5
noise = 0.1
seed = 1
"#;

    #[test]
    fn defaults_fill_in() {
        let c = parse_config(BASE, &[]).unwrap();
        assert_eq!(c.runs, 20);
        assert_eq!(c.cv_folds, 5);
        assert_eq!(c.grids.c.len(), 7);
        assert_eq!(c.grids.c[0], 0.125);
        assert_eq!(c.train.r_lambda, 8.0);
        assert!(!c.record_wall_time);
    }

    #[test]
    fn overrides_patch_nested_keys() {
        let c = parse_config(
            BASE,
            &[
                "runs=3".into(),
                "grids.c=[1.0]".into(),
                "dataset.noise=0.0".into(),
                "name=other".into(),
                "train.use_bias=true".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.runs, 3);
        assert_eq!(c.grids.c, vec![1.0]);
        assert_eq!(c.name, "other");
        assert!(c.train.use_bias);
        assert!(matches!(c.dataset, DatasetSpec::Synthetic { noise, .. } if noise == 0.0));
        // untouched grid keys keep their defaults
        assert_eq!(c.grids.p.len(), 4);
    }

    #[test]
    fn invalid_configs() {
        assert!(parse_config(BASE, &["runs=0".into()]).is_err());
        assert!(parse_config(BASE, &["fractions=[1.5]".into()]).is_err());
        assert!(parse_config(BASE, &["methods=[\"magic\"]".into()]).is_err());
        assert!(parse_config(BASE, &["grids.a_fraction=[0.01]".into()]).is_err());
        assert!(parse_config(BASE, &["bogus=1".into()]).is_err());
        assert!(parse_config(BASE, &["no_equals".into()]).is_err());
    }
}
