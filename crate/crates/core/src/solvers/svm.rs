//! Hinge-loss SVM dual solver.
//!
//! Without a bias the dual is the box QP `max Σα - ½ α'Qα, 0 ≤ α ≤ C` with
//! `Q = yy' ∘ K`; it is solved by greedy coordinate ascent on the most
//! violating coordinate. With a bias the equality `y'α = 0` couples the
//! variables and the solver switches to two-coordinate SMO steps on the
//! maximal violating pair. Both stop on the duality gap.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal entries or curvatures below `-PSD_TOL` reject the kernel.
const PSD_TOL: f64 = 1e-8;
const TAU: f64 = 1e-12;
/// Drift control for the incrementally maintained margins.
const REFRESH_EVERY: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmOptions {
    /// Absolute duality-gap tolerance.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            tol: 1e-6,
            max_iter: 100_000,
        }
    }
}

/// Solved per-task dual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Primal objective `½‖w‖² + C Σ hinge`.
    pub objective: f64,
    pub dual_objective: f64,
    pub duality_gap: f64,
    /// `½‖w‖²`
    pub regularizer: f64,
    /// `Σ_i max(0, 1 - y_i f(x_i))`
    pub hinge_sum: f64,
    /// Training decision values `f(x_i)` including the bias.
    pub decision_values: Vec<f64>,
    /// `‖w^m‖²` per base kernel; empty until the trainer fills it in.
    pub component_sq_norms: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl DualSolution {
    /// `(α ∘ y)`
    pub fn signed_alpha(&self, y: &[f64]) -> Vec<f64> {
        self.alpha.iter().zip(y).map(|(a, yi)| a * yi).collect()
    }
}

/// Solves with default options (gap ≤ 1e-6, at most 10⁵ iterations).
pub fn solve_svm_dual(k: &Array2<f64>, y: &[f64], c: f64, use_bias: bool) -> Result<DualSolution> {
    solve_svm_dual_with(k, y, c, use_bias, &SvmOptions::default())
}

pub fn solve_svm_dual_with(
    k: &Array2<f64>,
    y: &[f64],
    c: f64,
    use_bias: bool,
    opts: &SvmOptions,
) -> Result<DualSolution> {
    let n = y.len();
    validate(k, y, c, use_bias)?;
    let mut st = State::new(k, y, c);
    let (iterations, converged) = if use_bias {
        st.run_smo(opts)?
    } else {
        st.run_coordinate(opts)?
    };
    st.refresh_margins();
    let quad = st.quad();
    if quad < -PSD_TOL * (1.0 + st.alpha.iter().map(|a| a * a).sum::<f64>()) {
        return Err(Error::NotPsd(format!("α'Qα = {quad} at the solution")));
    }
    let bias = if use_bias { st.optimal_bias() } else { 0.0 };
    let decision_values: Vec<f64> = (0..n).map(|i| y[i] * st.margin[i] + bias).collect();
    let hinge_sum: f64 = decision_values
        .iter()
        .zip(y)
        .map(|(f, yi)| (1.0 - yi * f).max(0.0))
        .sum();
    let regularizer = 0.5 * quad.max(0.0);
    let objective = regularizer + c * hinge_sum;
    let dual_objective = st.alpha.iter().sum::<f64>() - 0.5 * quad;
    Ok(DualSolution {
        alpha: st.alpha,
        bias,
        objective,
        dual_objective,
        duality_gap: (objective - dual_objective).max(0.0),
        regularizer,
        hinge_sum,
        decision_values,
        component_sq_norms: Vec::new(),
        iterations,
        converged,
    })
}

fn validate(k: &Array2<f64>, y: &[f64], c: f64, use_bias: bool) -> Result<()> {
    let n = y.len();
    if n == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: k.nrows(),
        });
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("C must be positive, got {c}")));
    }
    if y.iter().any(|v| *v != 1.0 && *v != -1.0) {
        return Err(Error::invalid("labels must be ±1"));
    }
    // with a bias the equality constraint pins a one-class dual to α = 0
    if use_bias && y.iter().all(|v| *v == y[0]) {
        return Err(Error::DegenerateTask {
            task: String::new(),
            reason: "all labels belong to one class".into(),
        });
    }
    for i in 0..n {
        let d = k[[i, i]];
        if !d.is_finite() || d < -PSD_TOL {
            return Err(Error::NotPsd(format!("diagonal entry {i} is {d}")));
        }
    }
    Ok(())
}

struct State<'a> {
    k: &'a Array2<f64>,
    y: &'a [f64],
    c: f64,
    alpha: Vec<f64>,
    /// `(Qα)_i = y_i Σ_j α_j y_j K_ij`
    margin: Vec<f64>,
}

impl<'a> State<'a> {
    fn new(k: &'a Array2<f64>, y: &'a [f64], c: f64) -> Self {
        let n = y.len();
        State {
            k,
            y,
            c,
            alpha: vec![0.0; n],
            margin: vec![0.0; n],
        }
    }

    fn refresh_margins(&mut self) {
        let n = self.y.len();
        let ay: Vec<f64> = self.alpha.iter().zip(self.y).map(|(a, y)| a * y).collect();
        for i in 0..n {
            let row = self.k.row(i);
            let mut s = 0.0;
            for j in 0..n {
                if ay[j] != 0.0 {
                    s += row[j] * ay[j];
                }
            }
            self.margin[i] = self.y[i] * s;
        }
    }

    fn quad(&self) -> f64 {
        self.alpha.iter().zip(&self.margin).map(|(a, m)| a * m).sum()
    }

    fn update_margins(&mut self, i: usize, delta: f64) {
        let yi = self.y[i];
        let row = self.k.row(i);
        for (t, m) in self.margin.iter_mut().enumerate() {
            *m += delta * yi * self.y[t] * row[t];
        }
    }

    /// Gap of the box dual: `α'Qα + C Σ hinge - Σα`.
    fn gap_no_bias(&self) -> f64 {
        let mut quad = 0.0;
        let mut hinge = 0.0;
        let mut sum = 0.0;
        for (a, m) in self.alpha.iter().zip(&self.margin) {
            quad += a * m;
            hinge += (1.0 - m).max(0.0);
            sum += a;
        }
        quad + self.c * hinge - sum
    }

    fn run_coordinate(&mut self, opts: &SvmOptions) -> Result<(usize, bool)> {
        let n = self.y.len();
        let mut iter = 0;
        loop {
            if self.gap_no_bias() <= opts.tol {
                self.refresh_margins();
                if self.gap_no_bias() <= opts.tol {
                    return Ok((iter, true));
                }
            }
            // maximal violation of the projected gradient, lowest index on ties
            let mut best = 0.0;
            let mut pick = usize::MAX;
            for i in 0..n {
                let g = 1.0 - self.margin[i];
                let v = if g > 0.0 && self.alpha[i] < self.c {
                    g
                } else if g < 0.0 && self.alpha[i] > 0.0 {
                    -g
                } else {
                    0.0
                };
                if v > best {
                    best = v;
                    pick = i;
                }
            }
            if pick == usize::MAX {
                self.refresh_margins();
                return Ok((iter, true));
            }
            if iter >= opts.max_iter {
                return Ok((iter, false));
            }
            let i = pick;
            let qii = self.k[[i, i]];
            let g = 1.0 - self.margin[i];
            let target = if qii > TAU {
                self.alpha[i] + g / qii
            } else if g > 0.0 {
                self.c
            } else {
                0.0
            };
            let new = target.clamp(0.0, self.c);
            let delta = new - self.alpha[i];
            if delta == 0.0 {
                // violation below floating resolution
                self.refresh_margins();
                return Ok((iter, self.gap_no_bias() <= opts.tol));
            }
            self.alpha[i] = new;
            self.update_margins(i, delta);
            iter += 1;
            if iter % REFRESH_EVERY == 0 {
                self.refresh_margins();
            }
        }
    }

    /// Hinge sum of the decision values `y_i margin_i + b` at the given bias.
    fn hinge_at(&self, b: f64) -> f64 {
        self.margin
            .iter()
            .zip(self.y)
            .map(|(m, y)| (1.0 - m - y * b).max(0.0))
            .sum()
    }

    /// Bias minimizing the primal hinge term for the current α.
    fn optimal_bias(&self) -> f64 {
        // breakpoints where 1 - y_i (d_i + b) = 0, with d_i = y_i margin_i
        let mut bps: Vec<f64> = self
            .margin
            .iter()
            .zip(self.y)
            .map(|(m, y)| y - y * m)
            .collect();
        bps.sort_by(|a, b| a.total_cmp(b));
        bps.dedup();
        // the loss is convex in b, so its values on sorted breakpoints are unimodal
        let (mut lo, mut hi) = (0usize, bps.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.hinge_at(bps[mid + 1]) < self.hinge_at(bps[mid]) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        bps[lo]
    }

    fn gap_with_bias(&self) -> f64 {
        let quad = self.quad();
        let sum: f64 = self.alpha.iter().sum();
        let b = self.optimal_bias();
        quad + self.c * self.hinge_at(b) - sum
    }

    fn run_smo(&mut self, opts: &SvmOptions) -> Result<(usize, bool)> {
        let n = self.y.len();
        let c = self.c;
        let mut iter = 0;
        loop {
            if self.gap_with_bias() <= opts.tol {
                self.refresh_margins();
                if self.gap_with_bias() <= opts.tol {
                    return Ok((iter, true));
                }
            }
            // minimization form: G = Qα - 1
            let mut gmax = f64::NEG_INFINITY;
            let mut gmin = f64::INFINITY;
            let (mut i, mut j) = (usize::MAX, usize::MAX);
            for t in 0..n {
                let grad = self.margin[t] - 1.0;
                let yt = self.y[t];
                let a = self.alpha[t];
                let up = (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
                let low = (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);
                let v = -yt * grad;
                if up && v > gmax {
                    gmax = v;
                    i = t;
                }
                if low && v < gmin {
                    gmin = v;
                    j = t;
                }
            }
            if i == usize::MAX || j == usize::MAX || gmax - gmin <= 0.0 {
                self.refresh_margins();
                return Ok((iter, self.gap_with_bias() <= opts.tol));
            }
            if iter >= opts.max_iter {
                return Ok((iter, false));
            }
            let (yi, yj) = (self.y[i], self.y[j]);
            let qii = self.k[[i, i]];
            let qjj = self.k[[j, j]];
            let qij = yi * yj * self.k[[i, j]];
            let gi = self.margin[i] - 1.0;
            let gj = self.margin[j] - 1.0;
            let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
            let (mut ai, mut aj) = (old_i, old_j);
            if yi != yj {
                let mut quad_coef = qii + qjj + 2.0 * qij;
                if quad_coef < -PSD_TOL {
                    return Err(Error::NotPsd(format!("negative curvature {quad_coef} on pair ({i},{j})")));
                }
                if quad_coef <= 0.0 {
                    quad_coef = TAU;
                }
                let delta = (-gi - gj) / quad_coef;
                let diff = ai - aj;
                ai += delta;
                aj += delta;
                if diff > 0.0 {
                    if aj < 0.0 {
                        aj = 0.0;
                        ai = diff;
                    }
                } else if ai < 0.0 {
                    ai = 0.0;
                    aj = -diff;
                }
                if diff > 0.0 {
                    if ai > c {
                        ai = c;
                        aj = c - diff;
                    }
                } else if aj > c {
                    aj = c;
                    ai = c + diff;
                }
            } else {
                let mut quad_coef = qii + qjj - 2.0 * qij;
                if quad_coef < -PSD_TOL {
                    return Err(Error::NotPsd(format!("negative curvature {quad_coef} on pair ({i},{j})")));
                }
                if quad_coef <= 0.0 {
                    quad_coef = TAU;
                }
                let delta = (gi - gj) / quad_coef;
                let sum = ai + aj;
                ai -= delta;
                aj += delta;
                if sum > c {
                    if ai > c {
                        ai = c;
                        aj = sum - c;
                    }
                } else if aj < 0.0 {
                    aj = 0.0;
                    ai = sum;
                }
                if sum > c {
                    if aj > c {
                        aj = c;
                        ai = sum - c;
                    }
                } else if ai < 0.0 {
                    ai = 0.0;
                    aj = sum;
                }
            }
            let (di, dj) = (ai - old_i, aj - old_j);
            if di == 0.0 && dj == 0.0 {
                self.refresh_margins();
                return Ok((iter, self.gap_with_bias() <= opts.tol));
            }
            self.alpha[i] = ai;
            self.alpha[j] = aj;
            self.update_margins(i, di);
            self.update_margins(j, dj);
            iter += 1;
            if iter % REFRESH_EVERY == 0 {
                self.refresh_margins();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_point() {
        let s = solve_svm_dual(&array![[1.0]], &[1.0], 2.0, false).unwrap();
        assert_eq!(s.alpha, vec![1.0]);
        assert_eq!(s.objective, 0.5);
        assert_eq!(s.decision_values, vec![1.0]);
        assert_eq!(s.hinge_sum, 0.0);
        let b = solve_svm_dual(&array![[1.0]], &[1.0], 2.0, true);
        assert!(matches!(b, Err(Error::DegenerateTask { .. })));
    }

    #[test]
    fn one_variable_dual_solved_analytically() {
        // single free coordinate: with K = I and one point per class the
        // problem splits into two independent one-point duals
        let k = array![[1.0, 0.0], [0.0, 1.0]];
        let s = solve_svm_dual(&k, &[1.0, -1.0], 2.0, false).unwrap();
        assert_eq!(s.alpha, vec![1.0, 1.0]);
        assert_eq!(s.decision_values, vec![1.0, -1.0]);
        assert_eq!(s.hinge_sum, 0.0);
        assert_eq!(s.objective, 1.0);
        assert!(s.converged);
    }

    #[test]
    fn two_point_example() {
        let k = array![[1.0, -1.0], [-1.0, 1.0]];
        let s = solve_svm_dual(&k, &[1.0, -1.0], 10.0, false).unwrap();
        assert!((s.alpha[0] + s.alpha[1] - 1.0).abs() < 1e-12);
        assert!((s.decision_values[0] - 1.0).abs() < 1e-12);
        assert!((s.decision_values[1] + 1.0).abs() < 1e-12);
        assert!((s.objective - 0.5).abs() < 1e-12);
        assert!(s.duality_gap <= 1e-6);
    }

    #[test]
    fn tiny_c_collapses_box() {
        let k = array![[1.0, 0.2, 0.1], [0.2, 1.0, 0.3], [0.1, 0.3, 1.0]];
        let c = 1e-9;
        let s = solve_svm_dual(&k, &[1.0, -1.0, 1.0], c, false).unwrap();
        assert!(s.alpha.iter().all(|a| *a <= c));
        assert!((s.objective - c * 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_negative_diagonal_and_bad_labels() {
        let k = array![[-1.0, 0.0], [0.0, 1.0]];
        assert!(matches!(solve_svm_dual(&k, &[1.0, -1.0], 1.0, false), Err(Error::NotPsd(_))));
        let k = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(solve_svm_dual(&k, &[1.0, 0.5], 1.0, false).is_err());
        assert!(solve_svm_dual(&k, &[1.0, -1.0], 0.0, false).is_err());
    }

    #[test]
    fn indefinite_kernel_detected() {
        let k = array![[0.0, 1.0], [1.0, 0.0]];
        assert!(matches!(solve_svm_dual(&k, &[1.0, -1.0], 5.0, false), Err(Error::NotPsd(_))));
    }

    #[test]
    fn bias_variant_keeps_equality_constraint() {
        let k = array![
            [1.0, 0.8, 0.1, 0.0],
            [0.8, 1.0, 0.2, 0.1],
            [0.1, 0.2, 1.0, 0.7],
            [0.0, 0.1, 0.7, 1.0]
        ];
        let y = [1.0, 1.0, -1.0, 1.0];
        let s = solve_svm_dual(&k, &y, 3.0, true).unwrap();
        let ya: f64 = s.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        assert!(ya.abs() < 1e-12);
        assert!(s.converged);
        assert!(s.duality_gap <= 1e-6);
    }

    #[test]
    fn bias_shifts_unbalanced_problem() {
        // all points identical: only the bias can separate the majority
        let k = Array2::from_elem((3, 3), 1.0);
        let y = [1.0, 1.0, -1.0];
        let s = solve_svm_dual(&k, &y, 1.0, true).unwrap();
        assert!(s.bias > 0.0);
        assert!(s.decision_values.iter().all(|f| *f > 0.0));
    }
}
