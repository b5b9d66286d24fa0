//! Per-fraction summary tables with significance marks.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::Serialize;

use super::config::Method;
use super::stats::{paired_t_test, welch_t_test};
use super::ResultRow;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub fraction: f64,
    pub method: Method,
    pub runs: usize,
    pub failures: usize,
    pub mean: f64,
    pub std: f64,
    /// Highest mean accuracy at this fraction.
    pub best: bool,
    /// Not significantly worse than the best method.
    pub tied: bool,
    /// p-value of the test against the best method.
    pub p_value: Option<f64>,
}

fn mean_std(x: &[f64]) -> (f64, f64) {
    if x.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 {
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v.sqrt())
}

/// Groups rows by (dataset, fraction, method) and tests each method against
/// the best one at level `alpha`. `paired` pairs runs by seed.
pub fn summarize(rows: &[ResultRow], alpha: f64, paired: bool) -> Vec<SummaryRow> {
    type Key = (String, u64, Method);
    let mut groups: BTreeMap<Key, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.dataset.clone(), r.fraction.to_bits(), r.method))
            .or_default()
            .push(r);
    }
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut samples: Vec<Vec<(u64, f64)>> = Vec::new();
    for ((dataset, fbits, method), rs) in &groups {
        let ok: Vec<(u64, f64)> = rs
            .iter()
            .filter(|r| r.mean_accuracy.is_finite())
            .map(|r| (r.seed, r.mean_accuracy))
            .collect();
        let acc: Vec<f64> = ok.iter().map(|(_, a)| *a).collect();
        let (mean, std) = mean_std(&acc);
        out.push(SummaryRow {
            dataset: dataset.clone(),
            fraction: f64::from_bits(*fbits),
            method: *method,
            runs: rs.len(),
            failures: rs.len() - ok.len(),
            mean,
            std,
            best: false,
            tied: false,
            p_value: None,
        });
        samples.push(ok);
    }
    let mut i = 0;
    while i < out.len() {
        let mut j = i;
        while j < out.len() && out[j].dataset == out[i].dataset && out[j].fraction == out[i].fraction {
            j += 1;
        }
        let best = (i..j)
            .filter(|k| out[*k].mean.is_finite())
            .fold(None, |b: Option<usize>, k| match b {
                Some(b) if out[b].mean >= out[k].mean => Some(b),
                _ => Some(k),
            });
        if let Some(b) = best {
            out[b].best = true;
            out[b].tied = true;
            for k in (i..j).filter(|k| *k != b) {
                let test = if paired {
                    let by_seed: BTreeMap<u64, f64> = samples[b].iter().copied().collect();
                    let (x, y): (Vec<f64>, Vec<f64>) = samples[k]
                        .iter()
                        .filter_map(|(s, a)| by_seed.get(s).map(|bv| (*a, *bv)))
                        .unzip();
                    paired_t_test(&x, &y)
                } else {
                    let x: Vec<f64> = samples[k].iter().map(|(_, a)| *a).collect();
                    let y: Vec<f64> = samples[b].iter().map(|(_, a)| *a).collect();
                    welch_t_test(&x, &y)
                };
                if let Ok(t) = test {
                    out[k].p_value = Some(t.p_value);
                    out[k].tied = t.p_value >= alpha;
                }
            }
        }
        i = j;
    }
    out
}

/// Plain-text table; `*` marks the best method, `=` methods that are not
/// significantly worse.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:>8} {:<8} {:>5} {:>5} {:>9} {:>9} {:>9}",
        "dataset", "fraction", "method", "runs", "fail", "mean", "std", "p"
    );
    for r in rows {
        let mark = if r.best {
            "*"
        } else if r.tied {
            "="
        } else {
            ""
        };
        let p = r.p_value.map(|p| format!("{p:.4}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:<16} {:>8} {:<8} {:>5} {:>5} {:>9.4} {:>9.4} {:>9} {}",
            r.dataset,
            r.fraction,
            r.method.name(),
            r.runs,
            r.failures,
            r.mean,
            r.std,
            p,
            mark
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, seed: u64, acc: f64) -> ResultRow {
        ResultRow {
            dataset: "d".into(),
            fraction: 0.5,
            method,
            seed,
            mean_accuracy: acc,
            c: 1.0,
            p: 2.0,
            a: None,
            p_exp: None,
            wall_ms: 0,
            converged: true,
        }
    }

    #[test]
    fn marks_best_and_ties() {
        let mut rows = Vec::new();
        for s in 0..10 {
            let jitter = (s as f64) * 0.001;
            rows.push(row(Method::Conic, s, 0.90 + jitter));
            rows.push(row(Method::Average, s, 0.898 + jitter * 1.2));
            rows.push(row(Method::Single, s, 0.60 + jitter));
        }
        rows.push(row(Method::Single, 99, f64::NAN));
        let sum = summarize(&rows, 0.05, false);
        assert_eq!(sum.len(), 3);
        let get = |m| sum.iter().find(|r| r.method == m).unwrap();
        assert!(get(Method::Conic).best);
        assert!(get(Method::Average).tied && !get(Method::Average).best);
        assert!(!get(Method::Single).tied);
        assert_eq!(get(Method::Single).failures, 1);
        let text = render_summary(&sum);
        assert_eq!(text.lines().count(), 4);
        assert!(summarize(&rows, 0.05, true).iter().any(|r| r.best));
    }
}
