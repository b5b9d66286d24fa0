//! Randomized verification of the monotonicity, homogeneity and upper-bound
//! properties of the Rademacher estimators, on instances small enough for
//! exhaustive sign enumeration.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{erc_upper_bound_lp, estimate_s, rademacher_mc, BoundInputs, McOptions};
use crate::error::Result;
use crate::kernel::{cosine_normalize, trace_vector, GramStack};

/// Outcome of one property over many random instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub instances: usize,
    pub comparisons: usize,
    pub violations: usize,
    /// Largest amount by which an inequality was violated (0 if none).
    pub worst_excess: f64,
}

impl CheckOutcome {
    fn new(name: &'static str) -> Self {
        CheckOutcome {
            name,
            instances: 0,
            comparisons: 0,
            violations: 0,
            worst_excess: 0.0,
        }
    }

    /// Records whether `lhs ≤ rhs + tol`.
    fn record_le(&mut self, lhs: f64, rhs: f64, tol: f64) {
        self.comparisons += 1;
        if lhs > rhs + tol {
            self.violations += 1;
            self.worst_excess = self.worst_excess.max(lhs - rhs);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Random unit-diagonal PSD matrix: either a normalized Gram of Gaussian
/// vectors of random rank, or a Gaussian kernel on random points.
pub fn random_gram(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
    if rng.random::<bool>() {
        let rank = rng.random_range(1..=n.max(1));
        let a = Array2::from_shape_fn((n, rank), |_| rng.sample::<f64, _>(StandardNormal));
        let g = a.dot(&a.t());
        cosine_normalize(&g).unwrap_or_else(|_| Array2::eye(n))
    } else {
        let d = rng.random_range(1..=3);
        let x = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
        let sigma = 2f64.powf(rng.random_range(-2.0..2.0));
        Array2::from_shape_fn((n, n), |(i, j)| {
            let d2: f64 = (0..d).map(|k| (x[[i, k]] - x[[j, k]]).powi(2)).sum();
            (-d2 / (2.0 * sigma * sigma)).exp()
        })
    }
}

pub fn random_stacks(rng: &mut ChaCha8Rng, t: usize, n: usize, m: usize) -> Vec<GramStack> {
    (0..t)
        .map(|i| {
            let grams = (0..m).map(|_| random_gram(rng, n)).collect();
            GramStack::new(format!("{i}"), grams).expect("random grams are symmetric")
        })
        .collect()
}

/// Random task shape with `T·N ≤ max_signs`.
fn random_shape(rng: &mut ChaCha8Rng, max_t: usize, max_n: usize, max_m: usize, max_signs: usize) -> (usize, usize, usize) {
    loop {
        let t = rng.random_range(1..=max_t);
        let n = rng.random_range(1..=max_n);
        if t * n <= max_signs {
            return (t, n, rng.random_range(1..=max_m));
        }
    }
}

const PS: [f64; 4] = [1.0, 4.0 / 3.0, 2.0, 4.0];

/// Raising any single λ_t never increases the estimate.
pub fn check_lambda_monotone(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let mut out = CheckOutcome::new("rademacher non-increasing in each λ_t");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let o = McOptions::default();
    for _ in 0..instances {
        let (t, n, m) = random_shape(&mut rng, 4, 4, 3, 12);
        let stacks = random_stacks(&mut rng, t, n, m);
        let p = PS[rng.random_range(0..PS.len())];
        let lambda: Vec<f64> = (0..t).map(|_| rng.random_range(1.0..4.0)).collect();
        let base = rademacher_mc(&stacks, &lambda, 1.0, p, &o, None)?.mean;
        for k in 0..t {
            let mut l2 = lambda.clone();
            l2[k] *= rng.random_range(1.01..3.0);
            let v = rademacher_mc(&stacks, &l2, 1.0, p, &o, None)?.mean;
            out.record_le(v, base, 0.0);
        }
        out.instances += 1;
    }
    Ok(out)
}

/// Raising any single γ_t never decreases the estimate.
pub fn check_gamma_monotone(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let mut out = CheckOutcome::new("rademacher non-decreasing in each γ_t");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let o = McOptions::default();
    for _ in 0..instances {
        let (t, n, m) = random_shape(&mut rng, 4, 4, 3, 12);
        let stacks = random_stacks(&mut rng, t, n, m);
        let p = PS[rng.random_range(0..PS.len())];
        let lambda: Vec<f64> = (0..t).map(|_| rng.random_range(1.0..4.0)).collect();
        let gamma: Vec<f64> = (0..t).map(|_| rng.random_range(0.5..2.0)).collect();
        let base = rademacher_mc(&stacks, &lambda, 1.0, p, &o, Some(&gamma))?.mean;
        for k in 0..t {
            let mut g2 = gamma.clone();
            g2[k] *= rng.random_range(1.01..3.0);
            let v = rademacher_mc(&stacks, &lambda, 1.0, p, &o, Some(&g2))?.mean;
            out.record_le(base, v, 0.0);
        }
        out.instances += 1;
    }
    Ok(out)
}

/// Exhaustive estimate never exceeds the closed-form Lp upper bound.
pub fn check_lp_upper_bound(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let mut out = CheckOutcome::new("rademacher ≤ Lp upper bound");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let o = McOptions::default();
    for _ in 0..instances {
        let (t, n, m) = random_shape(&mut rng, 3, 4, 3, 12);
        let stacks = random_stacks(&mut rng, t, n, m);
        let p = PS[rng.random_range(1..PS.len())];
        let r = rng.random_range(0.5..3.0);
        let lambda: Vec<f64> = (0..t).map(|_| rng.random_range(1.0..8.0)).collect();
        let rad = rademacher_mc(&stacks, &lambda, r, p, &o, None)?.mean;
        let inputs = BoundInputs {
            t,
            n_total: t * n,
            m,
            lambda,
            r_lambda: 8.0,
            rho: 1.0,
            delta: 0.05,
            r,
            p,
            traces: stacks.iter().map(trace_vector).collect(),
        };
        let ub = erc_upper_bound_lp(&inputs).expect("p > 1");
        out.record_le(rad, ub, 1e-12);
        out.instances += 1;
    }
    Ok(out)
}

/// `rad(λ) ≤ (2/TN) √(Σ 1/λ_t) · s`.
pub fn check_general_upper_bound(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let mut out = CheckOutcome::new("rademacher ≤ (2/TN)·√(Σ1/λ)·s");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let o = McOptions::default();
    for _ in 0..instances {
        let (t, n, m) = random_shape(&mut rng, 4, 4, 3, 12);
        let stacks = random_stacks(&mut rng, t, n, m);
        let p = PS[rng.random_range(0..PS.len())];
        let lambda: Vec<f64> = (0..t).map(|_| rng.random_range(1.0..8.0)).collect();
        let rad = rademacher_mc(&stacks, &lambda, 1.0, p, &o, None)?.mean;
        let s = estimate_s(&stacks, 1.0, p, &o)?.mean;
        let inv: f64 = lambda.iter().map(|l| 1.0 / l).sum();
        let rhs = 2.0 / (t * n) as f64 * inv.sqrt() * s;
        out.record_le(rad, rhs, 1e-12 * rhs.max(1.0));
        out.instances += 1;
    }
    Ok(out)
}

/// `rad(2λ) = rad(λ)/√2` up to four units in the last place.
pub fn check_homogeneity(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let mut out = CheckOutcome::new("rademacher(2λ) = rademacher(λ)/√2");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let o = McOptions::default();
    for _ in 0..instances {
        let (t, n, m) = random_shape(&mut rng, 4, 4, 3, 12);
        let stacks = random_stacks(&mut rng, t, n, m);
        let p = PS[rng.random_range(0..PS.len())];
        let lambda: Vec<f64> = (0..t).map(|_| rng.random_range(1.0..4.0)).collect();
        let doubled: Vec<f64> = lambda.iter().map(|l| 2.0 * l).collect();
        let a = rademacher_mc(&stacks, &lambda, 1.0, p, &o, None)?.mean;
        let b = rademacher_mc(&stacks, &doubled, 1.0, p, &o, None)?.mean;
        let expected = a / std::f64::consts::SQRT_2;
        out.comparisons += 1;
        let diff = (b - expected).abs();
        if diff > 4.0 * f64::EPSILON * expected.abs() {
            out.violations += 1;
            out.worst_excess = out.worst_excess.max(diff);
        }
        out.instances += 1;
    }
    Ok(out)
}

/// Runs every check with the given instance count.
pub fn run_all(instances: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    Ok(vec![
        check_lambda_monotone(instances, seed)?,
        check_gamma_monotone(instances, seed.wrapping_add(1))?,
        check_lp_upper_bound(instances, seed.wrapping_add(2))?,
        check_general_upper_bound(instances, seed.wrapping_add(3))?,
        check_homogeneity(instances, seed.wrapping_add(4))?,
    ])
}
