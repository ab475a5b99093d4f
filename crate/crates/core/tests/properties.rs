use proptest::prelude::*;

use relulab::convexnn::{
    balanced_factorization, factorization_penalty, features, kkt_residual, sample_library,
    soft_threshold, solve_l1_features, trace_norm, LibraryScheme, SolverOptions, SquaredLoss,
};
use relulab::data::{add_label_noise, LabeledDataset};
use relulab::hardness::{augment, compile, HalfspaceSet};
use relulab::loss::{f_trunc, softmax_ce, truncated_ce, Scores};
use relulab::model::NetParams;
use relulab::sweep::{format_sig6, parse_csv, records_to_csv, SweepRecord, Variant};
use relulab::{Matrix, Rng};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncated_loss_is_a_tight_lower_bound(
        s in prop::collection::vec(-40.0f64..40.0, 2..=10),
        pick in 0usize..10,
    ) {
        let c = pick % s.len();
        let sc = Scores::new(&s, c).unwrap();
        let gap = softmax_ce(&sc).0 - truncated_ce(&sc).0;
        prop_assert!(gap >= 0.0);
        prop_assert!(gap <= 3e-6 * s.len() as f64);
    }

    #[test]
    fn f_trunc_is_monotone(a in -20.0f64..5.0, b in -20.0f64..5.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(f_trunc(lo) <= f_trunc(hi));
    }

    #[test]
    fn balance_keeps_the_function_and_is_idempotent(seed in any::<u64>(), d in 1usize..6, h in 1usize..10) {
        let mut rng = Rng::new(seed);
        let p = NetParams::init(d, h, 1, 1.0, &mut rng).unwrap();
        let b = p.balance().unwrap();
        let bb = b.balance().unwrap();
        for _ in 0..10 {
            let x = rng.gaussian(d, 1.0);
            let (y0, y1) = (p.forward(&x).unwrap()[0], b.forward(&x).unwrap()[0]);
            prop_assert!((y0 - y1).abs() <= 1e-12 * (1.0 + y0.abs()));
        }
        prop_assert!(b.half_squared_norm() <= p.half_squared_norm() * (1.0 + 1e-12));
        prop_assert!(rel(bb.half_squared_norm(), b.half_squared_norm()) <= 1e-12);
    }

    #[test]
    fn soft_threshold_shrinks_toward_zero(x in -10.0f64..10.0, t in 0.0f64..5.0) {
        let y = soft_threshold(x, t);
        prop_assert!(y.abs() <= x.abs());
        prop_assert!(y == 0.0 || y.signum() == x.signum());
        prop_assert!((x.abs() - y.abs() - t.min(x.abs())).abs() < 1e-12);
    }

    #[test]
    fn lasso_solution_certifies_itself(seed in any::<u64>(), lambda in 0.01f64..1.0) {
        let mut rng = Rng::new(seed);
        let x = Matrix::from_vec(12, 3, rng.gaussian(36, 1.0)).unwrap();
        let y = rng.gaussian(12, 1.0);
        let lib = sample_library(3, 20, LibraryScheme::GaussianNormalized, &mut rng).unwrap();
        let phi = features(&lib, &x).unwrap();
        let sol = solve_l1_features(&phi, &y, lambda, &SquaredLoss, &SolverOptions::default()).unwrap();
        prop_assert!(sol.converged);
        let residual: Vec<f64> = phi.matvec(&sol.v).unwrap().iter().zip(&y).map(|(p, y)| p - y).collect();
        let grad = phi.tr_matvec(&residual).unwrap();
        prop_assert!(kkt_residual(&grad, &sol.v, lambda) <= 1e-6);
    }

    #[test]
    fn trace_norm_lower_bounds_every_factorization(seed in any::<u64>(), n in 1usize..5, r in 1usize..5) {
        let mut rng = Rng::new(seed);
        let u = Matrix::from_vec(n, r, rng.gaussian(n * r, 1.0)).unwrap();
        let v = Matrix::from_vec(n + 1, r, rng.gaussian((n + 1) * r, 1.0)).unwrap();
        let w = v.matmul(&u.transpose()).unwrap();
        let tn = trace_norm(&w).unwrap();
        prop_assert!(factorization_penalty(&u, &v).unwrap() >= tn * (1.0 - 1e-12));
        let (ub, vb) = balanced_factorization(&w).unwrap();
        prop_assert!(rel(factorization_penalty(&ub, &vb).unwrap(), tn) <= 1e-8);
    }

    #[test]
    fn compiled_network_counts_satisfied_halfspaces(seed in any::<u64>(), dim in 1usize..8, k in 1usize..5) {
        let mut rng = Rng::new(seed);
        let hs = HalfspaceSet::random(dim, k, &mut rng).unwrap();
        let net = compile(&hs);
        for _ in 0..20 {
            let x: Vec<i8> = (0..dim).map(|_| if rng.below(2) == 1 { 1 } else { -1 }).collect();
            let xf: Vec<f64> = x.iter().map(|&e| f64::from(e)).collect();
            let out = net.forward(&augment(&xf)).unwrap()[0];
            prop_assert_eq!(out, hs.count_satisfied(&x) as f64);
            prop_assert_eq!(out, hs.closed_form(&x));
        }
    }

    #[test]
    fn label_noise_changes_exactly_the_requested_count(seed in any::<u64>(), n in 1usize..300, fraction in 0.0f64..=1.0) {
        let ds = LabeledDataset::new(Matrix::zeros(n, 1), (0..n).map(|i| i % 4).collect(), 4).unwrap();
        let noisy = add_label_noise(&ds, fraction, &mut Rng::new(seed)).unwrap();
        let expected = (fraction * n as f64).round() as usize;
        prop_assert_eq!(noisy.changed.len(), expected);
        let differing = ds.labels().iter().zip(noisy.dataset.labels()).filter(|(a, b)| a != b).count();
        prop_assert_eq!(differing, expected);
    }

    #[test]
    fn sig6_formatting_round_trips_to_six_digits(x in -1e6f64..1e6) {
        let parsed: f64 = format_sig6(x).parse().unwrap();
        prop_assert!((parsed - x).abs() <= 5e-6 * x.abs() + 1e-300);
    }

    #[test]
    fn csv_round_trip(seed in 0u64..1000, h in 1usize..4096, err in 0.0f64..1.0) {
        let rec = SweepRecord {
            variant: Variant::CensoredNoisy,
            seed,
            hidden: h,
            lambda: 0.0,
            epochs_run: 17,
            train_error_final: err,
            train_error_earlystop: err,
            validation_error_best: err,
            test_error_final: err,
            test_error_earlystop: err,
        };
        let text = records_to_csv(std::slice::from_ref(&rec)).unwrap();
        let back = parse_csv(&text, "mem").unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(back[0].hidden, h);
        prop_assert_eq!(back[0].seed, seed);
        prop_assert!((back[0].test_error_final - err).abs() <= 5e-6 * err + 1e-300);
    }
}
