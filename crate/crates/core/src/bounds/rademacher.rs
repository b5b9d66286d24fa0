use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::GramStack;
use crate::norms::{dual_exponent, lp_norm};

/// Sign vectors up to this total length are enumerated exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 20;
/// Fixed number of RNG streams, so results do not depend on the thread count.
const STREAMS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub samples: usize,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            samples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Number of sign patterns averaged.
    pub samples: usize,
    pub exhaustive: bool,
}

fn check_stacks(stacks: &[GramStack]) -> Result<usize> {
    let first = stacks.first().ok_or_else(|| Error::invalid("no Gram stacks"))?;
    let m = first.num_kernels();
    if stacks.iter().any(|s| s.num_kernels() != m) {
        return Err(Error::invalid("tasks use different kernel counts"));
    }
    Ok(m)
}

fn quad(k: &ndarray::Array2<f64>, s: &[f64]) -> f64 {
    crate::kernel::quad_form(k, s).max(0.0)
}

/// `[σ'K^1σ, …, σ'K^Mσ]`
fn task_quads(stack: &GramStack, sigma: &[f64]) -> Vec<f64> {
    stack.grams().iter().map(|k| quad(k, sigma)).collect()
}

fn signs_from_bits(bits: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| if bits >> i & 1 == 1 { -1.0 } else { 1.0 }).collect()
}

/// Mean of `f(q_1(σ_1), …, q_T(σ_T))` over all sign patterns, using per-task
/// tables of quadratic forms so each pattern costs `O(T·M)`.
fn enumerate<F>(stacks: &[GramStack], f: F) -> RademacherEstimate
where
    F: Fn(&[&[f64]]) -> f64 + Sync,
{
    let tables: Vec<Vec<Vec<f64>>> = stacks
        .iter()
        .map(|s| {
            let n = s.num_samples();
            (0..1usize << n).map(|b| task_quads(s, &signs_from_bits(b, n))).collect()
        })
        .collect();
    let sizes: Vec<usize> = tables.iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().product();
    let mut idx = vec![0usize; tables.len()];
    let mut sum = 0.0;
    let mut rows: Vec<&[f64]> = tables.iter().map(|t| t[0].as_slice()).collect();
    for _ in 0..total {
        sum += f(&rows);
        // mixed-radix increment
        for (t, i) in idx.iter_mut().enumerate() {
            *i += 1;
            if *i < sizes[t] {
                rows[t] = &tables[t][*i];
                break;
            }
            *i = 0;
            rows[t] = &tables[t][0];
        }
    }
    RademacherEstimate {
        mean: sum / total as f64,
        std_error: 0.0,
        samples: total,
        exhaustive: true,
    }
}

fn monte_carlo<F>(stacks: &[GramStack], opts: &McOptions, f: F) -> Result<RademacherEstimate>
where
    F: Fn(&[&[f64]]) -> f64 + Sync,
{
    if opts.samples == 0 {
        return Err(Error::invalid("Monte-Carlo estimation needs at least one sample"));
    }
    let per = opts.samples / STREAMS;
    let extra = opts.samples % STREAMS;
    let parts: Vec<(f64, f64)> = (0..STREAMS)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(w as u64);
            let count = per + usize::from(w < extra);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let quads: Vec<Vec<f64>> = stacks
                    .iter()
                    .map(|st| {
                        let sigma: Vec<f64> = (0..st.num_samples())
                            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                            .collect();
                        task_quads(st, &sigma)
                    })
                    .collect();
                let rows: Vec<&[f64]> = quads.iter().map(|q| q.as_slice()).collect();
                let v = f(&rows);
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (sum, sumsq) = parts.iter().fold((0.0, 0.0), |(a, b), (s, s2)| (a + s, b + s2));
    let n = opts.samples as f64;
    let mean = sum / n;
    let var = if opts.samples > 1 {
        ((sumsq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(RademacherEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples: opts.samples,
        exhaustive: false,
    })
}

fn estimate<F>(stacks: &[GramStack], opts: &McOptions, f: F) -> Result<RademacherEstimate>
where
    F: Fn(&[&[f64]]) -> f64 + Sync,
{
    let total: usize = stacks.iter().map(|s| s.num_samples()).sum();
    if total <= EXHAUSTIVE_LIMIT {
        Ok(enumerate(stacks, f))
    } else {
        monte_carlo(stacks, opts, f)
    }
}

/// Empirical Rademacher complexity `(2/TN) E_σ[√(R ‖u(σ)‖_{p*})]` with
/// `u_m(σ) = Σ_t (γ_t²/λ_t) σ_t'K_t^m σ_t` (`γ = 1` when absent).
pub fn rademacher_mc(
    stacks: &[GramStack],
    lambda: &[f64],
    r: f64,
    p: f64,
    opts: &McOptions,
    gamma: Option<&[f64]>,
) -> Result<RademacherEstimate> {
    let m = check_stacks(stacks)?;
    let t = stacks.len();
    if lambda.len() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            got: lambda.len(),
        });
    }
    if lambda.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::invalid("λ must be positive"));
    }
    let gamma = gamma.map(<[f64]>::to_vec).unwrap_or_else(|| vec![1.0; t]);
    if gamma.len() != t || gamma.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
        return Err(Error::invalid("γ must be positive with one entry per task"));
    }
    if !(r > 0.0) || !(p >= 1.0) {
        return Err(Error::invalid("R must be positive and p >= 1"));
    }
    // Dividing λ by a power of two is exact, so the averaged sum is the same
    // for λ and 2^k λ and homogeneity in λ holds up to the final rescaling.
    let exp = lambda.iter().fold(f64::INFINITY, |m, l| m.min(*l)).log2().floor() as i32;
    let shift = 2f64.powi(exp);
    let weights: Vec<f64> = gamma.iter().zip(lambda).map(|(g, l)| g * g / (l / shift)).collect();
    let q = dual_exponent(p);
    let total: usize = stacks.iter().map(|s| s.num_samples()).sum();
    let mut est = estimate(stacks, opts, |rows| {
        let u: Vec<f64> = (0..m)
            .map(|k| rows.iter().zip(&weights).map(|(row, w)| w * row[k]).sum())
            .collect();
        (r * lp_norm(&u, q)).sqrt()
    })?;
    scale(&mut est, 2.0 / total as f64);
    let root = if exp % 2 == 0 {
        2f64.powi(exp / 2)
    } else {
        2f64.powi(exp.div_euclid(2)) * std::f64::consts::SQRT_2
    };
    est.mean /= root;
    est.std_error /= root;
    Ok(est)
}

/// `s = E_σ[√(R max_t ‖u_t(σ)‖_{p*})]` with `u_t^m(σ) = σ_t'K_t^m σ_t`.
pub fn estimate_s(stacks: &[GramStack], r: f64, p: f64, opts: &McOptions) -> Result<RademacherEstimate> {
    check_stacks(stacks)?;
    if !(r > 0.0) || !(p >= 1.0) {
        return Err(Error::invalid("R must be positive and p >= 1"));
    }
    let q = dual_exponent(p);
    estimate(stacks, opts, |rows| {
        let best = rows.iter().map(|row| lp_norm(row, q)).fold(0.0, f64::max);
        (r * best).sqrt()
    })
}

fn scale(est: &mut RademacherEstimate, c: f64) {
    est.mean *= c;
    est.std_error *= c;
}
