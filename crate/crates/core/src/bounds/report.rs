use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    bound_rhs_any_lambda, bound_rhs_fixed_lambda, erc_upper_bound_lp, rademacher_mc, BoundInputs, BoundTerms,
    McOptions,
};
use crate::data::TaskDataset;
use crate::error::Result;
use crate::kernel::{trace_vector, GramStack};
use crate::trainer::{predict, weighted_empirical_loss, MtlModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundOptions {
    pub delta: f64,
    pub rho: f64,
    pub mc: McOptions,
}

impl Default for BoundOptions {
    fn default() -> Self {
        BoundOptions {
            delta: 0.05,
            rho: 1.0,
            mc: McOptions::default(),
        }
    }
}

/// Every term of both bounds for one trained model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub tasks: usize,
    pub n_total: usize,
    pub kernels: usize,
    pub p: f64,
    pub rho: f64,
    pub delta: f64,
    /// `Σ_t λ_t ‖w_t‖²` of the model.
    pub radius: f64,
    pub r_lambda: f64,
    /// `r_λ` rounded up to an integer, as used in the bound.
    pub r_lambda_used: f64,
    pub empirical_loss: f64,
    pub rademacher: f64,
    pub rademacher_std_error: f64,
    pub rademacher_samples: usize,
    pub rademacher_exhaustive: bool,
    /// Closed-form Lp upper bound on the complexity; absent for `p = 1`.
    pub rademacher_upper: Option<f64>,
    pub any_lambda: BoundTerms,
    pub fixed_lambda: BoundTerms,
    /// Mean over tasks of the test error rate, when a test split is given.
    pub test_error: Option<f64>,
}

impl BoundReport {
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            ("tasks", self.tasks.to_string()),
            ("n_total", self.n_total.to_string()),
            ("kernels", self.kernels.to_string()),
            ("p", self.p.to_string()),
            ("rho", self.rho.to_string()),
            ("delta", self.delta.to_string()),
            ("radius", self.radius.to_string()),
            ("r_lambda", self.r_lambda.to_string()),
            ("r_lambda_used", self.r_lambda_used.to_string()),
            ("empirical_loss", self.empirical_loss.to_string()),
            ("rademacher", self.rademacher.to_string()),
            ("rademacher_std_error", self.rademacher_std_error.to_string()),
            ("rademacher_samples", self.rademacher_samples.to_string()),
            ("rademacher_exhaustive", self.rademacher_exhaustive.to_string()),
            ("rademacher_upper", opt(self.rademacher_upper)),
            ("any_lambda_empirical", self.any_lambda.empirical.to_string()),
            ("any_lambda_complexity", self.any_lambda.complexity.to_string()),
            ("any_lambda_choice", self.any_lambda.lambda_choice.to_string()),
            ("any_lambda_confidence", self.any_lambda.confidence.to_string()),
            ("any_lambda_total", self.any_lambda.total.to_string()),
            ("any_lambda_log_clamped", self.any_lambda.clamped.to_string()),
            ("fixed_lambda_complexity", self.fixed_lambda.complexity.to_string()),
            ("fixed_lambda_total", self.fixed_lambda.total.to_string()),
            ("test_error", opt(self.test_error)),
        ]
    }

    /// One `name value` pair per line.
    pub fn to_kv(&self) -> String {
        self.fields().into_iter().map(|(k, v)| format!("{k} {v}\n")).collect()
    }

    pub fn csv_header() -> Vec<&'static str> {
        let dummy = BoundReport {
            tasks: 0,
            n_total: 0,
            kernels: 0,
            p: 0.0,
            rho: 0.0,
            delta: 0.0,
            radius: 0.0,
            r_lambda: 0.0,
            r_lambda_used: 0.0,
            empirical_loss: 0.0,
            rademacher: 0.0,
            rademacher_std_error: 0.0,
            rademacher_samples: 0,
            rademacher_exhaustive: false,
            rademacher_upper: None,
            any_lambda: BoundTerms {
                empirical: 0.0,
                complexity: 0.0,
                lambda_choice: 0.0,
                confidence: 0.0,
                total: 0.0,
                clamped: false,
            },
            fixed_lambda: BoundTerms {
                empirical: 0.0,
                complexity: 0.0,
                lambda_choice: 0.0,
                confidence: 0.0,
                total: 0.0,
                clamped: false,
            },
            test_error: None,
        };
        dummy.fields().into_iter().map(|(k, _)| k).collect()
    }

    /// Writes a header (optionally) and this report as one CSV row.
    pub fn write_csv<W: Write>(&self, w: W, header: bool) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        if header {
            wr.write_record(Self::csv_header())?;
        }
        wr.write_record(self.fields().into_iter().map(|(_, v)| v))?;
        wr.flush().map_err(|e| crate::error::Error::Format(e.to_string()))?;
        Ok(())
    }
}

/// Rebuilds the training Gram stacks of `model`.
pub fn model_stacks(model: &MtlModel) -> Result<Vec<GramStack>> {
    model
        .tasks
        .iter()
        .map(|t| GramStack::from_samples(t.task_id.clone(), &model.kernels, t.x.view()))
        .collect()
}

/// Evaluates both bounds for a trained model. The hypothesis radius is the
/// model's own `Σ_t λ_t ‖w_t‖²`.
pub fn bound_report(model: &MtlModel, test: Option<&[TaskDataset]>, opts: &BoundOptions) -> Result<BoundReport> {
    let stacks = model_stacks(model)?;
    let lambda = model.lambda.values.clone();
    let r_lambda = model.config.r_lambda;
    let r_lambda_used = r_lambda.ceil();
    if lambda.iter().any(|l| *l < 1.0 || *l > r_lambda) {
        log::warn!("model λ lies outside [1, r_λ]; bound hypotheses do not hold");
    }
    let radius = model.weighted_sq_norm();
    let n_total = model.tasks.iter().map(|t| t.y.len()).sum();
    let p = model.config.p;
    let inputs = BoundInputs {
        t: model.tasks.len(),
        n_total,
        m: model.theta.len(),
        lambda: lambda.clone(),
        r_lambda: r_lambda_used,
        rho: opts.rho,
        delta: opts.delta,
        r: radius,
        p,
        traces: stacks.iter().map(trace_vector).collect(),
    };
    let rad = if radius > 0.0 {
        rademacher_mc(&stacks, &lambda, radius, p, &opts.mc, None)?
    } else {
        super::RademacherEstimate {
            mean: 0.0,
            std_error: 0.0,
            samples: 0,
            exhaustive: true,
        }
    };
    let upper = if radius > 0.0 { erc_upper_bound_lp(&inputs) } else { Some(0.0) };
    let emp = weighted_empirical_loss(model, opts.rho);
    let any_lambda = bound_rhs_any_lambda(&inputs, emp, rad.mean);
    let fixed_lambda = bound_rhs_fixed_lambda(&inputs, emp, rad.mean);
    let test_error = match test {
        Some(tasks) => Some(test_error(model, tasks)?),
        None => None,
    };
    Ok(BoundReport {
        tasks: inputs.t,
        n_total,
        kernels: inputs.m,
        p,
        rho: opts.rho,
        delta: opts.delta,
        radius,
        r_lambda,
        r_lambda_used,
        empirical_loss: emp,
        rademacher: rad.mean,
        rademacher_std_error: rad.std_error,
        rademacher_samples: rad.samples,
        rademacher_exhaustive: rad.exhaustive,
        rademacher_upper: upper,
        any_lambda,
        fixed_lambda,
        test_error,
    })
}

/// Mean over tasks of the misclassification rate; tasks without test
/// samples are skipped.
pub fn test_error(model: &MtlModel, tasks: &[TaskDataset]) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in tasks {
        if t.is_empty() {
            continue;
        }
        let pred = predict(model, &t.task_id, t.x.view())?;
        let wrong = pred.labels.iter().zip(&t.y).filter(|(a, b)| a != b).count();
        sum += wrong as f64 / t.len() as f64;
        count += 1;
    }
    Ok(if count == 0 { f64::NAN } else { sum / count as f64 })
}
