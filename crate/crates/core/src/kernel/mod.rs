//! Base-kernel Gram matrices: construction, cosine normalization, per-task
//! stacks and their θ-weighted combination.
//!
//! The default dictionary holds 11 kernels: linear, a degree-2 polynomial
//! `(1 + x'y)^2`, and Gaussians `exp(-‖x - y‖² / (2σ²))` for
//! σ ∈ {2⁻⁷, 2⁻⁵, 2⁻³, 2⁻¹, 2⁰, 2¹, 2³, 2⁵, 2⁷}. Linear and polynomial
//! kernels are cosine-normalized so every base kernel has unit diagonal.

pub mod cache;
mod stack;

pub use stack::{combine, trace_vector, GramStack, ThetaWeights};
pub(crate) use stack::quad_form;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponents of the Gaussian spreads in the default dictionary.
pub const DEFAULT_SPREAD_EXPONENTS: [i32; 9] = [-7, -5, -3, -1, 0, 1, 3, 5, 7];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum KernelKind {
    Linear,
    Polynomial { degree: u32, offset: f64 },
    /// `exp(-‖x - y‖² / (2 sigma²))`
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub normalize: bool,
}

/// How a Gaussian "spread" value is turned into the bandwidth σ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadConvention {
    /// spread = σ
    #[default]
    Sigma,
    /// spread = σ²
    Variance,
    /// spread = γ in `exp(-γ‖x - y‖²)`
    Gamma,
}

impl SpreadConvention {
    pub fn sigma(self, spread: f64) -> f64 {
        match self {
            SpreadConvention::Sigma => spread,
            SpreadConvention::Variance => spread.sqrt(),
            SpreadConvention::Gamma => (0.5 / spread).sqrt(),
        }
    }
}

impl KernelSpec {
    pub fn linear() -> Self {
        KernelSpec {
            kind: KernelKind::Linear,
            normalize: true,
        }
    }

    pub fn polynomial(degree: u32, offset: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Polynomial { degree, offset },
            normalize: true,
        }
    }

    pub fn gaussian(sigma: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Gaussian { sigma },
            normalize: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            KernelKind::Linear => Ok(()),
            KernelKind::Polynomial { degree, offset } => {
                if degree < 1 {
                    return Err(Error::invalid("polynomial degree must be >= 1"));
                }
                if !offset.is_finite() {
                    return Err(Error::NonFinite("polynomial offset"));
                }
                Ok(())
            }
            KernelKind::Gaussian { sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return Err(Error::invalid(format!("gaussian spread must be > 0, got {sigma}")));
                }
                Ok(())
            }
        }
    }

    /// Unnormalized kernel value.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => dot(x, y),
            KernelKind::Polynomial { degree, offset } => (offset + dot(x, y)).powi(degree as i32),
            KernelKind::Gaussian { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            KernelKind::Linear => "linear".to_string(),
            KernelKind::Polynomial { degree, offset } => format!("poly(d={degree},c={offset})"),
            KernelKind::Gaussian { sigma } => format!("gauss(sigma={sigma})"),
        }
    }
}

/// The 11-kernel dictionary with Gaussian spreads read under `convention`.
pub fn dictionary(convention: SpreadConvention) -> Vec<KernelSpec> {
    let mut specs = vec![KernelSpec::linear(), KernelSpec::polynomial(2, 1.0)];
    specs.extend(
        DEFAULT_SPREAD_EXPONENTS
            .iter()
            .map(|&e| KernelSpec::gaussian(convention.sigma(2f64.powi(e)))),
    );
    specs
}

pub fn default_dictionary() -> Vec<KernelSpec> {
    dictionary(SpreadConvention::Sigma)
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn check_finite(x: &ArrayView2<f64>, what: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn raw_gram(spec: &KernelSpec, rows: ArrayView2<f64>, cols: ArrayView2<f64>) -> Array2<f64> {
    let rows_c = rows.as_standard_layout();
    let cols_c = cols.as_standard_layout();
    let mut out = Array2::zeros((rows.nrows(), cols.nrows()));
    for (i, r) in rows_c.axis_iter(Axis(0)).enumerate() {
        let r = r.as_slice().expect("standard layout row");
        for (j, c) in cols_c.axis_iter(Axis(0)).enumerate() {
            out[[i, j]] = spec.eval(r, c.as_slice().expect("standard layout row"));
        }
    }
    out
}

/// Gram matrix with entry `(i, j) = k(rows_i, cols_j)`.
///
/// With `normalize` set, entries are divided by `sqrt(k(r, r) k(c, c))`; when
/// `rows` and `cols` are the same sample set the result has an exact unit
/// diagonal.
pub fn compute_gram(spec: &KernelSpec, rows: ArrayView2<f64>, cols: ArrayView2<f64>) -> Result<Array2<f64>> {
    spec.validate()?;
    if rows.ncols() != cols.ncols() {
        return Err(Error::DimensionMismatch {
            expected: rows.ncols(),
            got: cols.ncols(),
        });
    }
    check_finite(&rows, "gram rows")?;
    check_finite(&cols, "gram cols")?;

    let same = rows.shape() == cols.shape() && rows == cols;
    if same {
        let mut k = raw_gram(spec, rows, rows);
        symmetrize(&mut k);
        return if spec.normalize { cosine_normalize(&k) } else { Ok(k) };
    }

    let mut k = raw_gram(spec, rows, cols);
    if spec.normalize {
        let self_diag = |m: ArrayView2<f64>| -> Result<Vec<f64>> {
            m.axis_iter(Axis(0))
                .enumerate()
                .map(|(i, r)| {
                    let r = r.to_vec();
                    let v = spec.eval(&r, &r);
                    if v > 0.0 {
                        Ok(v.sqrt())
                    } else {
                        Err(Error::NonPositiveDiagonal { index: i, value: v })
                    }
                })
                .collect()
        };
        let dr = self_diag(rows)?;
        let dc = self_diag(cols)?;
        for ((i, j), v) in k.indexed_iter_mut() {
            *v /= dr[i] * dc[j];
        }
    }
    Ok(k)
}

fn symmetrize(k: &mut Array2<f64>) {
    let n = k.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = k[[i, j]];
            k[[j, i]] = v;
        }
    }
}

/// `out(i, j) = gram(i, j) / sqrt(gram(i, i) gram(j, j))`, diagonal set to 1.
pub fn cosine_normalize(gram: &Array2<f64>) -> Result<Array2<f64>> {
    let n = gram.nrows();
    if gram.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: gram.ncols(),
        });
    }
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        let v = gram[[i, i]];
        if !(v > 0.0) {
            return Err(Error::NonPositiveDiagonal { index: i, value: v });
        }
        d.push(v.sqrt());
    }
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        out[[i, i]] = 1.0;
        for j in (i + 1)..n {
            let v = gram[[i, j]] / (d[i] * d[j]);
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    Ok(out)
}

/// Per-dimension standardization fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Zero-variance dimensions keep a unit scale.
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::invalid("cannot standardize an empty sample set"));
        }
        check_finite(&x, "standardizer input")?;
        let n = x.nrows() as f64;
        let mean: Vec<f64> = x.axis_iter(Axis(1)).map(|c| c.sum() / n).collect();
        let scale = x
            .axis_iter(Axis(1))
            .zip(&mean)
            .map(|(c, m)| {
                let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { mean, scale })
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: x.ncols(),
            });
        }
        let mut out = x.to_owned();
        for mut row in out.axis_iter_mut(Axis(0)) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gaussian_self_similarity_is_one() {
        let x = array![[0.0, 0.0]];
        let k = compute_gram(&KernelSpec::gaussian(1.0), x.view(), x.view()).unwrap();
        assert_eq!(k[[0, 0]], 1.0);
    }

    #[test]
    fn linear_is_dot_product() {
        let x = array![[1.0, 2.0]];
        let y = array![[3.0, 4.0]];
        let spec = KernelSpec {
            kind: KernelKind::Linear,
            normalize: false,
        };
        let k = compute_gram(&spec, x.view(), y.view()).unwrap();
        assert_eq!(k[[0, 0]], 11.0);
    }

    #[test]
    fn gaussian_at_distance_two() {
        let x = array![[0.0]];
        let y = array![[2.0]];
        let k = compute_gram(&KernelSpec::gaussian(1.0), x.view(), y.view()).unwrap();
        assert!((k[[0, 0]] - (-2.0f64).exp()).abs() < 1e-15);
        assert!((k[[0, 0]] - 0.135335).abs() < 1e-6);
    }

    #[test]
    fn cosine_normalize_examples() {
        let g = array![[4.0, 2.0], [2.0, 1.0]];
        assert_eq!(cosine_normalize(&g).unwrap(), array![[1.0, 1.0], [1.0, 1.0]]);
        let eye = Array2::<f64>::eye(3);
        assert_eq!(cosine_normalize(&eye).unwrap(), eye);
    }

    #[test]
    fn cosine_normalize_rejects_zero_diagonal() {
        let g = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(matches!(
            cosine_normalize(&g),
            Err(Error::NonPositiveDiagonal { index: 1, .. })
        ));
    }

    #[test]
    fn zero_vector_under_normalized_linear_fails() {
        let x = array![[0.0, 0.0], [1.0, 2.0]];
        assert!(compute_gram(&KernelSpec::linear(), x.view(), x.view()).is_err());
    }

    #[test]
    fn dimension_mismatch_and_non_finite() {
        let x = array![[0.0, 0.0]];
        let y = array![[0.0]];
        assert!(matches!(
            compute_gram(&KernelSpec::gaussian(1.0), x.view(), y.view()),
            Err(Error::DimensionMismatch { .. })
        ));
        let z = array![[f64::NAN, 0.0]];
        assert!(matches!(
            compute_gram(&KernelSpec::gaussian(1.0), z.view(), x.view()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn default_dictionary_has_eleven_kernels() {
        let d = default_dictionary();
        assert_eq!(d.len(), 11);
        assert_eq!(d[0].kind, KernelKind::Linear);
        assert_eq!(d[1].kind, KernelKind::Polynomial { degree: 2, offset: 1.0 });
        let sigmas: Vec<f64> = d[2..]
            .iter()
            .map(|s| match s.kind {
                KernelKind::Gaussian { sigma } => sigma,
                _ => panic!("expected gaussian"),
            })
            .collect();
        assert_eq!(sigmas.first(), Some(&(1.0 / 128.0)));
        assert_eq!(sigmas.last(), Some(&128.0));
    }

    #[test]
    fn spread_conventions() {
        assert_eq!(SpreadConvention::Sigma.sigma(4.0), 4.0);
        assert_eq!(SpreadConvention::Variance.sigma(4.0), 2.0);
        // exp(-γ d²) with γ = 0.5 equals σ = 1
        assert_eq!(SpreadConvention::Gamma.sigma(0.5), 1.0);
    }

    #[test]
    fn normalized_cross_gram_matches_square_block() {
        let x = array![[1.0, 0.5], [0.2, -1.0], [3.0, 1.0]];
        let spec = KernelSpec::polynomial(2, 1.0);
        let full = compute_gram(&spec, x.view(), x.view()).unwrap();
        let top = x.slice(ndarray::s![0..2, ..]);
        let cross = compute_gram(&spec, top, x.view()).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert!((cross[[i, j]] - full[[i, j]]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn standardizer_roundtrip_statistics() {
        let x = array![[1.0, 5.0], [3.0, 5.0], [5.0, 5.0]];
        let s = Standardizer::fit(x.view()).unwrap();
        assert_eq!(s.mean, vec![3.0, 5.0]);
        assert_eq!(s.scale[1], 1.0);
        let z = s.transform(x.view()).unwrap();
        assert!((z.column(0).sum()).abs() < 1e-15);
        assert_eq!(z.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
    }
}
