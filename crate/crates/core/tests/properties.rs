use ndarray::Array2;
use proptest::prelude::*;

use conic_mtl::bounds::margin_loss;
use conic_mtl::data::{parse_sparse_text, stratified_split, write_sparse_text, Provenance, TaskDataset};
use conic_mtl::kernel::{combine, default_dictionary, GramStack, ThetaWeights};
use conic_mtl::solvers::{lambda_step, solve_svm_dual, theta_step};
use conic_mtl::trainer::pareto_lambda;

fn points(n: usize, d: usize) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(-3.0..3.0f64, n * d).prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
}

fn min_eigenvalue(k: &Array2<f64>) -> f64 {
    let n = k.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| k[[i, j]]);
    m.symmetric_eigen().eigenvalues.min()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn combined_gram_is_linear_and_psd(x in points(6, 2), w1 in prop::collection::vec(0.0..1.0f64, 3), w2 in prop::collection::vec(0.0..1.0f64, 3)) {
        let dict = default_dictionary();
        let specs = [dict[0], dict[4], dict[8]];
        let stack = GramStack::from_samples("t", &specs, x.view()).unwrap();
        let norm = |w: &[f64]| w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
        let a: Vec<f64> = w1.iter().map(|v| v / (2.0 * norm(&w1))).collect();
        let b: Vec<f64> = w2.iter().map(|v| v / (2.0 * norm(&w2))).collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let ka = combine(&stack, &ThetaWeights::new(a, 2.0).unwrap()).unwrap();
        let kb = combine(&stack, &ThetaWeights::new(b, 2.0).unwrap()).unwrap();
        let ks = combine(&stack, &ThetaWeights::new(sum, 2.0).unwrap()).unwrap();
        for ((s, a), b) in ks.iter().zip(&ka).zip(&kb) {
            prop_assert!((s - a - b).abs() <= 1e-12 * (1.0 + s.abs()));
        }
        prop_assert!(min_eigenvalue(&ks) >= -1e-9);
    }

    #[test]
    fn theta_step_lands_on_the_sphere(u in prop::collection::vec(0.0..100.0f64, 1..8), pi in 0usize..4) {
        prop_assume!(u.iter().any(|v| *v > 0.0));
        let p = [1.0, 4.0 / 3.0, 2.0, 4.0][pi];
        let t = theta_step(&u, p).unwrap();
        prop_assert!((t.norm() - 1.0).abs() <= 1e-10);
        for (ti, ui) in t.values.iter().zip(&u) {
            prop_assert!(*ti >= 0.0);
            prop_assert_eq!(*ti == 0.0, *ui == 0.0);
        }
    }

    #[test]
    fn lambda_step_is_feasible_and_monotone_in_budget(
        jc in prop::collection::vec((0.0..10.0f64, 0.1..5.0f64), 1..6),
        frac in 0.15..1.3f64,
        extra in 0.0..0.5f64,
    ) {
        let r = 8.0;
        let (j, c): (Vec<f64>, Vec<f64>) = jc.into_iter().unzip();
        let sum_c: f64 = c.iter().sum();
        let a = frac * sum_c;
        let l = lambda_step(&j, &c, a, r).unwrap();
        prop_assert!(l.values.iter().all(|v| (1.0..=r).contains(v)));
        prop_assert!(l.budget_used(&c) <= a * (1.0 + 1e-9));
        let looser = lambda_step(&j, &c, a * (1.0 + extra), r).unwrap();
        prop_assert!(looser.objective(&j) <= l.objective(&j) * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn svm_dual_never_exceeds_primal(x in points(8, 2), labels in prop::collection::vec(any::<bool>(), 8), c in 0.1..10.0f64, bias in any::<bool>()) {
        let mut y: Vec<f64> = labels.iter().map(|b| if *b { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let stack = GramStack::from_samples("t", &[default_dictionary()[5]], x.view()).unwrap();
        let s = solve_svm_dual(&stack.grams()[0], &y, c, bias).unwrap();
        prop_assert!(s.alpha.iter().all(|a| *a >= 0.0 && *a <= c));
        prop_assert!(s.dual_objective <= s.objective + 1e-9);
        if bias {
            let eq: f64 = s.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
            prop_assert!(eq.abs() <= 1e-9 * (1.0 + c));
        }
    }

    #[test]
    fn margin_loss_is_bounded_and_lipschitz(x1 in -10.0..10.0f64, x2 in -10.0..10.0f64, rho in 0.01..5.0f64) {
        let (l1, l2) = (margin_loss(x1, rho), margin_loss(x2, rho));
        prop_assert!((0.0..=1.0).contains(&l1));
        prop_assert!((l1 - l2).abs() <= (x1 - x2).abs() / rho + 1e-12);
    }

    #[test]
    fn pareto_weights_normalize_for_p_above_one(f in prop::collection::vec(0.01..100.0f64, 1..6), p in 1.01..6.0f64) {
        let l = pareto_lambda(&f, p).unwrap();
        let dot: f64 = l.iter().zip(&f).map(|(a, b)| a * b).sum();
        prop_assert!((dot - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn sparse_text_round_trips(x in points(5, 3), labels in prop::collection::vec(any::<bool>(), 5)) {
        let y: Vec<f64> = labels.iter().map(|b| if *b { 1.0 } else { -1.0 }).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.txt");
        write_sparse_text(&path, x.view(), &y).unwrap();
        let back = parse_sparse_text(&std::fs::read_to_string(&path).unwrap(), Some(3), "d.txt").unwrap();
        prop_assert_eq!(back.x, x);
        if y.iter().any(|v| *v > 0.0) && y.iter().any(|v| *v < 0.0) {
            prop_assert_eq!(back.labels, y);
        }
    }

    #[test]
    fn stratified_split_keeps_class_ratios(npos in 2usize..30, nneg in 2usize..30, frac in 0.2..0.8f64, seed in any::<u64>()) {
        let n = npos + nneg;
        let y: Vec<f64> = (0..n).map(|i| if i < npos { 1.0 } else { -1.0 }).collect();
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        let task = TaskDataset::new("t", x, y, Provenance::default()).unwrap();
        let split = stratified_split(&task, frac, seed);
        if frac * (npos.min(nneg) as f64) < 1.0 {
            prop_assert!(split.is_err());
            return Ok(());
        }
        let (train, test) = split.unwrap();
        let (tp, tn) = train.class_counts();
        prop_assert_eq!(tp, (frac * npos as f64).round() as usize);
        prop_assert_eq!(tn, (frac * nneg as f64).round() as usize);
        prop_assert_eq!(train.len() + test.len(), n);
    }
}
