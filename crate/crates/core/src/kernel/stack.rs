use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{compute_gram, KernelSpec};
use crate::error::{Error, Result};
use crate::norms::{dual_exponent, lp_norm};

/// One task's base-kernel Gram matrices `K_t^1 … K_t^M` and their traces.
///
/// Immutable once built; share it by reference across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct GramStack {
    task_id: String,
    grams: Vec<Array2<f64>>,
    traces: Vec<f64>,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl GramStack {
    pub fn new(task_id: impl Into<String>, grams: Vec<Array2<f64>>) -> Result<Self> {
        let task_id = task_id.into();
        if grams.is_empty() {
            return Err(Error::invalid(format!("task {task_id}: empty kernel stack")));
        }
        let n = grams[0].nrows();
        for g in &grams {
            if g.nrows() != n || g.ncols() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: if g.nrows() != n { g.nrows() } else { g.ncols() },
                });
            }
            if !g.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("gram matrix"));
            }
            for i in 0..n {
                for j in (i + 1)..n {
                    let (a, b) = (g[[i, j]], g[[j, i]]);
                    if (a - b).abs() > SYMMETRY_TOL * (1.0 + a.abs().max(b.abs())) {
                        return Err(Error::NotPsd(format!("task {task_id}: gram not symmetric at ({i},{j})")));
                    }
                }
            }
        }
        let traces = grams.iter().map(diag_sum).collect();
        Ok(GramStack { task_id, grams, traces })
    }

    /// Builds every base Gram for one task's (already standardized) samples.
    pub fn from_samples(task_id: impl Into<String>, specs: &[KernelSpec], x: ArrayView2<f64>) -> Result<Self> {
        let grams = specs
            .iter()
            .map(|s| compute_gram(s, x, x))
            .collect::<Result<Vec<_>>>()?;
        Self::new(task_id, grams)
    }

    pub fn task_id(&self) -> &str {
        &self.task_id
    }

    pub fn grams(&self) -> &[Array2<f64>] {
        &self.grams
    }

    pub fn traces(&self) -> &[f64] {
        &self.traces
    }

    /// Number of base kernels M.
    pub fn num_kernels(&self) -> usize {
        self.grams.len()
    }

    /// Number of samples N.
    pub fn num_samples(&self) -> usize {
        self.grams[0].nrows()
    }

    /// Principal sub-stack on `idx` (rows and columns).
    pub fn subset(&self, idx: &[usize]) -> Result<GramStack> {
        let grams = self.grams.iter().map(|g| select(g, idx, idx)).collect();
        Self::new(self.task_id.clone(), grams)
    }

    /// Rectangular block `K^m[rows, cols]` for every base kernel.
    pub fn cross_blocks(&self, rows: &[usize], cols: &[usize]) -> Vec<Array2<f64>> {
        self.grams.iter().map(|g| select(g, rows, cols)).collect()
    }

    /// `σ' K_θ σ ≥ -tol ‖σ‖²` for `trials` random sign vectors.
    pub fn psd_spot_check<R: Rng>(&self, theta: &ThetaWeights, rng: &mut R, trials: usize, tol: f64) -> Result<bool> {
        let k = combine(self, theta)?;
        let n = self.num_samples();
        for _ in 0..trials {
            let s: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            if quad_form(&k, &s) < -tol * n as f64 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

fn diag_sum(g: &Array2<f64>) -> f64 {
    (0..g.nrows()).map(|i| g[[i, i]]).sum()
}

fn select(g: &Array2<f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| g[[rows[i], cols[j]]])
}

pub(crate) fn quad_form(k: &Array2<f64>, v: &[f64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        if v[i] == 0.0 {
            continue;
        }
        let row = k.row(i);
        let mut r = 0.0;
        for j in 0..n {
            r += row[j] * v[j];
        }
        s += v[i] * r;
    }
    s
}

/// Kernel weights θ on the Lp ball `{θ ⪰ 0, ‖θ‖_p ≤ 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaWeights {
    pub values: Vec<f64>,
    pub p: f64,
}

impl ThetaWeights {
    pub fn new(values: Vec<f64>, p: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::invalid(format!("Lp exponent must be >= 1, got {p}")));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::invalid("theta must be nonnegative and finite"));
        }
        let norm = lp_norm(&values, p);
        if norm > 1.0 + 1e-9 {
            return Err(Error::invalid(format!("‖θ‖_p = {norm} exceeds 1")));
        }
        Ok(ThetaWeights { values, p })
    }

    /// The symmetric point `θ_m = M^{-1/p}` on the sphere.
    pub fn uniform(m: usize, p: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("theta needs at least one kernel"));
        }
        Self::new(vec![(m as f64).powf(-1.0 / p); m], p)
    }

    pub fn dual_exponent(&self) -> f64 {
        dual_exponent(self.p)
    }

    pub fn norm(&self) -> f64 {
        lp_norm(&self.values, self.p)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `Σ_m θ_m K^m`.
pub fn combine(stack: &GramStack, theta: &ThetaWeights) -> Result<Array2<f64>> {
    combine_blocks(stack.grams(), &theta.values)
}

fn combine_blocks(blocks: &[Array2<f64>], weights: &[f64]) -> Result<Array2<f64>> {
    if blocks.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: blocks.len(),
            got: weights.len(),
        });
    }
    let mut out = Array2::zeros(blocks[0].raw_dim());
    for (g, &w) in blocks.iter().zip(weights) {
        if w != 0.0 {
            out.scaled_add(w, g);
        }
    }
    Ok(out)
}

/// `v_t = [tr(K_t^1), …, tr(K_t^M)]`.
pub fn trace_vector(stack: &GramStack) -> Vec<f64> {
    stack.traces.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::default_dictionary;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_kernel_stack() -> GramStack {
        GramStack::new("t", vec![Array2::eye(2), array![[1.0, 1.0], [1.0, 1.0]]]).unwrap()
    }

    #[test]
    fn combine_examples() {
        let s = two_kernel_stack();
        let e1 = ThetaWeights::new(vec![1.0, 0.0], 2.0).unwrap();
        assert_eq!(combine(&s, &e1).unwrap(), Array2::<f64>::eye(2));
        let zero = ThetaWeights::new(vec![0.0, 0.0], 2.0).unwrap();
        assert_eq!(combine(&s, &zero).unwrap(), Array2::<f64>::zeros((2, 2)));
        let half = ThetaWeights::new(vec![0.5, 0.5], 1.0).unwrap();
        assert_eq!(combine(&s, &half).unwrap(), array![[1.0, 0.5], [0.5, 1.0]]);
    }

    #[test]
    fn combine_length_mismatch() {
        let s = two_kernel_stack();
        let t = ThetaWeights::new(vec![1.0], 1.0).unwrap();
        assert!(matches!(combine(&s, &t), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn trace_examples() {
        let x = array![[0.1, 1.0], [2.0, -1.0], [0.5, 0.5], [1.0, 1.0], [-3.0, 0.2], [0.0, 1.0], [1.5, 2.5], [0.3, 0.3], [9.0, 1.0], [-1.0, -1.0]];
        let specs = &default_dictionary()[..3];
        let s = GramStack::from_samples("t", specs, x.view()).unwrap();
        assert_eq!(trace_vector(&s), vec![10.0, 10.0, 10.0]);

        let z = GramStack::new("z", vec![Array2::zeros((2, 2)), array![[2.0, 0.0], [0.0, 3.0]]]).unwrap();
        assert_eq!(trace_vector(&z), vec![0.0, 5.0]);
    }

    #[test]
    fn theta_invariants() {
        assert!(ThetaWeights::new(vec![0.8, 0.8], 1.0).is_err());
        assert!(ThetaWeights::new(vec![-0.1, 0.5], 2.0).is_err());
        assert!(ThetaWeights::new(vec![0.5], 0.5).is_err());
        let u = ThetaWeights::uniform(4, 2.0).unwrap();
        assert!((u.norm() - 1.0).abs() < 1e-12);
        assert_eq!(u.values[0], 0.5);
    }

    #[test]
    fn asymmetric_gram_rejected() {
        assert!(GramStack::new("t", vec![array![[1.0, 0.2], [0.1, 1.0]]]).is_err());
    }

    #[test]
    fn subset_and_cross_blocks() {
        let g = array![[1.0, 2.0, 3.0], [2.0, 5.0, 6.0], [3.0, 6.0, 9.0]];
        let s = GramStack::new("t", vec![g]).unwrap();
        let sub = s.subset(&[0, 2]).unwrap();
        assert_eq!(sub.grams()[0], array![[1.0, 3.0], [3.0, 9.0]]);
        assert_eq!(sub.traces(), &[10.0]);
        assert_eq!(s.cross_blocks(&[1], &[0, 2])[0], array![[2.0, 6.0]]);
    }

    #[test]
    fn psd_spot_check_on_dictionary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Array2::from_shape_fn((12, 3), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0 + 0.1 * i as f64);
        let s = GramStack::from_samples("t", &default_dictionary(), x.view()).unwrap();
        let theta = ThetaWeights::uniform(11, 2.0).unwrap();
        assert!(s.psd_spot_check(&theta, &mut rng, 100, 1e-8).unwrap());
        let bad = GramStack::new("b", vec![array![[0.0, 1.0], [1.0, 0.0]]]).unwrap();
        let t1 = ThetaWeights::new(vec![1.0], 1.0).unwrap();
        assert!(!bad.psd_spot_check(&t1, &mut rng, 100, 1e-8).unwrap());
    }
}
