//! Synthetic related tasks.
//!
//! Recipe: draw a shared unit direction `μ_s` and per task a private unit
//! direction `μ_p`; the task direction is `μ_t = normalize(s·μ_s + (1-s)·μ_p)`
//! for similarity `s`. Labels alternate +1/-1. A sample is
//! `x = y·(0.5 + u)·μ_t + z_⊥ + noise·ε` with `u ~ U(0,1)`, `z_⊥` a standard
//! Gaussian projected orthogonally to `μ_t` and `ε` standard Gaussian. With
//! zero noise every task is linearly separable with margin 0.5 along `μ_t`.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{MultiTaskDataset, Provenance, TaskDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub tasks: usize,
    /// Samples per task.
    pub n: usize,
    pub d: usize,
    pub similarity: f64,
    pub noise: f64,
    pub seed: u64,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) -> bool {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
        true
    } else {
        false
    }
}

fn unit_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let mut v = gaussian_vec(rng, d);
        if normalize(&mut v) {
            return v;
        }
    }
}

pub fn synth_multitask(spec: &SynthSpec) -> Result<MultiTaskDataset> {
    if spec.tasks == 0 || spec.n < 2 || spec.d == 0 {
        return Err(Error::invalid("synthetic data needs tasks ≥ 1, n ≥ 2 and d ≥ 1"));
    }
    if !(0.0..=1.0).contains(&spec.similarity) {
        return Err(Error::invalid(format!("similarity must lie in [0, 1], got {}", spec.similarity)));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::invalid(format!("noise must be nonnegative, got {}", spec.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared = unit_vec(&mut rng, spec.d);
    let s = spec.similarity;
    let mut tasks = Vec::with_capacity(spec.tasks);
    for t in 0..spec.tasks {
        let private = unit_vec(&mut rng, spec.d);
        let mut mu: Vec<f64> = shared.iter().zip(&private).map(|(a, b)| s * a + (1.0 - s) * b).collect();
        if !normalize(&mut mu) {
            mu = shared.clone();
        }
        let mut x = Array2::zeros((spec.n, spec.d));
        let mut y = Vec::with_capacity(spec.n);
        for i in 0..spec.n {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            let scale = label * (0.5 + rng.random::<f64>());
            let mut z = gaussian_vec(&mut rng, spec.d);
            let proj: f64 = z.iter().zip(&mu).map(|(a, b)| a * b).sum();
            z.iter_mut().zip(&mu).for_each(|(zj, m)| *zj -= proj * m);
            let eps = gaussian_vec(&mut rng, spec.d);
            for j in 0..spec.d {
                x[[i, j]] = scale * mu[j] + z[j] + spec.noise * eps[j];
            }
            y.push(label);
        }
        tasks.push(TaskDataset::new(
            format!("{t}"),
            x,
            y,
            Provenance::new("synthetic", Some(spec.seed)),
        )?);
    }
    MultiTaskDataset::new(tasks)
}

/// Unit decision direction of each task, for tests.
#[cfg(test)]
pub(crate) fn task_directions(spec: &SynthSpec) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shared = unit_vec(&mut rng, spec.d);
    let mut out = Vec::new();
    for _ in 0..spec.tasks {
        let private = unit_vec(&mut rng, spec.d);
        let mut mu: Vec<f64> = shared
            .iter()
            .zip(&private)
            .map(|(a, b)| spec.similarity * a + (1.0 - spec.similarity) * b)
            .collect();
        normalize(&mut mu);
        out.push(mu);
        // skip the samples drawn for this task
        for _ in 0..spec.n {
            let _: f64 = rng.random();
            gaussian_vec(&mut rng, spec.d);
            gaussian_vec(&mut rng, spec.d);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(similarity: f64, noise: f64, seed: u64) -> SynthSpec {
        SynthSpec {
            tasks: 4,
            n: 60,
            d: 5,
            similarity,
            noise,
            seed,
        }
    }

    #[test]
    fn balanced_and_deterministic() {
        let a = synth_multitask(&spec(0.5, 0.1, 3)).unwrap();
        assert_eq!(a.num_tasks(), 4);
        for t in &a.tasks {
            assert_eq!(t.class_counts(), (30, 30));
        }
        assert_eq!(a, synth_multitask(&spec(0.5, 0.1, 3)).unwrap());
    }

    #[test]
    fn noiseless_tasks_are_separable_along_their_direction() {
        let sp = spec(0.3, 0.0, 8);
        let d = synth_multitask(&sp).unwrap();
        for (t, mu) in d.tasks.iter().zip(task_directions(&sp)) {
            for (row, y) in t.x.rows().into_iter().zip(&t.y) {
                let m: f64 = row.iter().zip(&mu).map(|(a, b)| a * b).sum();
                assert!(y * m >= 0.5 - 1e-12);
            }
        }
    }

    #[test]
    fn full_similarity_shares_direction() {
        let dirs = task_directions(&spec(1.0, 0.0, 2));
        for d in &dirs[1..] {
            assert_eq!(d, &dirs[0]);
        }
    }

    #[test]
    fn zero_similarity_directions_uncorrelated() {
        let mut sum = 0.0;
        let mut count = 0.0;
        for seed in 0..100 {
            let dirs = task_directions(&SynthSpec {
                d: 20,
                ..spec(0.0, 0.0, seed)
            });
            for i in 0..dirs.len() {
                for j in (i + 1)..dirs.len() {
                    sum += dirs[i].iter().zip(&dirs[j]).map(|(a, b)| a * b).sum::<f64>();
                    count += 1.0;
                }
            }
        }
        // inner products of independent unit vectors in R^20 have sd ≈ 0.22
        assert!((sum / count).abs() < 0.05, "{}", sum / count);
    }
}
