use std::collections::HashSet;
use std::sync::Arc;

use morrisk_core::greedy_sampling::*;
use morrisk_core::hull_white_fem::*;
use morrisk_core::market_data::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn noisy_linear(n: usize, m: usize, seed: u64) -> LearningData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(&mut rng));
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = StandardNormal.sample(&mut rng);
        1.0 + 2.0 * x[(i, 0)] - 0.5 * x[(i, m - 1)] + 0.1 * e
    });
    LearningData::new(x, y, (100..100 + n).collect()).unwrap()
}

fn sq_err(model: &SurrogateModel, data: &LearningData, i: usize) -> f64 {
    let x: Vec<f64> = data.features.row(i).iter().copied().collect();
    (model.predict(&x) - data.targets[i]).powi(2)
}

#[test]
fn kfold_with_one_row_per_fold_is_leave_one_out() {
    let data = noisy_linear(8, 3, 1);
    let folds = assign_folds(8, 8, 3).unwrap();
    let got = kfold_msep(&data, &folds, 8, |d| fit_pcr(d, 2)).unwrap();
    let mut sum = 0.0;
    for f in 0..8 {
        let i = folds.iter().position(|&x| x == f).unwrap();
        let rest: Vec<usize> = (0..8).filter(|&j| j != i).collect();
        let model = fit_pcr(&data.subset(&rest), 2).unwrap();
        sum += sq_err(&model, &data, i);
    }
    assert_eq!(got, sum / 8.0);
}

#[test]
fn adjusted_msep_matches_term_wise_assembly() {
    let n = 23;
    let k = 4;
    let data = noisy_linear(n, 5, 2);
    let folds = assign_folds(n, k, 11).unwrap();
    let cv = msep_adjusted(&data, &folds, k, |d| fit_pcr(d, 3)).unwrap();

    let full_model = fit_pcr(&data, 3).unwrap();
    let app: f64 = (0..n).map(|i| sq_err(&full_model, &data, i)).sum::<f64>() / n as f64;
    let mut held = 0.0;
    let mut train = 0.0;
    for f in 0..k {
        let tr: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
        let model = fit_pcr(&data.subset(&tr), 3).unwrap();
        for i in 0..n {
            let e = sq_err(&model, &data, i);
            if folds[i] == f {
                held += e;
            } else {
                train += e / k as f64;
            }
        }
    }
    let kcv = held / n as f64;
    let train_term = train / n as f64;
    assert!((cv.msep_kcv - kcv).abs() < 1e-12);
    assert!((cv.msep_app - app).abs() < 1e-12);
    assert!((cv.train_term - train_term).abs() < 1e-12);
    assert!((cv.msep_kcv_adj - (kcv + app - train_term)).abs() < 1e-12);
}

#[test]
fn pca_error_falls_to_zero_at_full_rank() {
    let data = noisy_linear(30, 6, 4);
    let s = fit_pcr(&data, 6).unwrap().sigma_hat;
    let e: Vec<f64> = (0..=6).map(|p| relative_pca_error(&s, p)).collect();
    assert!((e[0] - 1.0).abs() < 1e-12);
    assert!(e.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(e[6], 0.0);
}

#[test]
fn pcr_is_exact_on_linear_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = DMatrix::from_fn(20, 4, |_, _| StandardNormal.sample(&mut rng));
    let beta = [0.3, -1.2, 0.0, 2.5];
    let y = DVector::from_fn(20, |i, _| 0.7 + (0..4).map(|j| beta[j] * x[(i, j)]).sum::<f64>());
    let data = LearningData::new(x, y, (0..20).collect()).unwrap();
    let model = fit_pcr(&data, 4).unwrap();
    assert!(msep_apparent(&data, &model) < 1e-24);
    let probe = [1.0, 2.0, -1.0, 0.5];
    let want = 0.7 + (0..4).map(|j| beta[j] * probe[j]).sum::<f64>();
    assert!((model.predict(&probe) - want).abs() < 1e-10);
}

#[test]
fn folds_are_balanced_and_seeded() {
    for (n, k) in [(10, 3), (8, 8), (41, 4), (5, 2)] {
        let f = assign_folds(n, k, 9).unwrap();
        let sizes: Vec<usize> = (0..k).map(|j| f.iter().filter(|&&x| x == j).count()).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{sizes:?}");
        assert_eq!(f, assign_folds(n, k, 9).unwrap());
    }
    assert!(assign_folds(3, 4, 0).is_err());
    assert!(assign_folds(3, 1, 0).is_err());
}

#[test]
fn surrogate_selection_raises_p_until_the_tolerance() {
    let data = noisy_linear(40, 6, 6);
    let (model, se) = select_surrogate(&data, 4, 0.05, 1).unwrap();
    assert!(se.converged);
    assert_eq!(model.p, se.p);
    assert!(se.eps_samp < 0.05);
    let (_, strict) = select_surrogate(&data, 4, 1e-12, 1).unwrap();
    assert!(!strict.converged);
}

#[test]
fn error_model_recovers_a_power_law() {
    let pairs: Vec<(f64, f64)> = [1e-2, 1e-3, 1e-4, 1e-5].iter().map(|&r: &f64| (r, 3.0 * r.powf(1.5))).collect();
    let em = ErrorModel::fit(&pairs).unwrap();
    assert!((em.slope - 1.5).abs() < 1e-12);
    assert!((em.predict(1e-6) - 3.0e-9).abs() < 1e-20);
    assert!(ErrorModel::fit(&[(1e-3, 1e-4)]).is_none());
}

#[test]
fn worst_candidate_skips_nan_and_excluded_ids() {
    let ex: HashSet<usize> = [7].into_iter().collect();
    assert_eq!(worst_candidate(&[5, 7, 9], &[0.1, 0.9, f64::NAN], &ex), Some(5));
    assert_eq!(worst_candidate(&[5, 6], &[0.3, 0.3], &HashSet::new()), Some(5));
    assert_eq!(worst_candidate(&[7], &[1.0], &ex), None);
}

fn desk_space(s: usize) -> ParameterSpace {
    let tenors = standard_tenors();
    let hist = synthetic_history(&tenors, 400, 1).unwrap();
    let curves = simulate_yield_curves(&hist, s, 5.0, 2).unwrap();
    build_parameter_space(&curves, &HullWhite2F::new(0.75, 0.04, 0.0035, 0.008, 0.65).unwrap()).unwrap()
}

#[test]
fn greedy_runs_never_train_twice_on_a_scenario() {
    let space = desk_space(60);
    let mesh = build_mesh_cells(default_bounds(&space, 6.0).unwrap(), 12, 12).unwrap();
    let full = Arc::new(FullModel::new(mesh, Instrument::steepener(), 0.5, BoundaryCondition::Linearity).unwrap());
    let cfg = GreedyConfig {
        c: 20,
        c0: 5,
        c_k: 5,
        c_max: 20,
        i_max: 6,
        e_tol: 1e-12,
        ..GreedyConfig::default()
    };
    for out in [classical_greedy(&full, &space, &cfg).unwrap(), adaptive_greedy(&full, &space, &cfg).unwrap()] {
        let unique: HashSet<usize> = out.trained_ids.iter().copied().collect();
        assert_eq!(unique.len(), out.trained_ids.len(), "{:?}", out.mode);
        assert!(out.full_solves() <= cfg.i_max);
        assert_eq!(out.snapshots.scenario_ids(), out.trained_ids);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_trace_csv(&out.trace, &p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), out.trace.len() + 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn worst_candidate_is_invariant_under_monotone_maps(values in prop::collection::vec(0.0f64..1.0, 1..30), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let ids: Vec<usize> = (0..values.len()).map(|i| 3 * i + 1).collect();
        let none = HashSet::new();
        let mapped: Vec<f64> = values.iter().map(|v| a * v.powi(3) + b).collect();
        let logged: Vec<f64> = values.iter().map(|v| (v + 1e-3).ln()).collect();
        let w = worst_candidate(&ids, &values, &none);
        prop_assert_eq!(w, worst_candidate(&ids, &mapped, &none));
        prop_assert_eq!(w, worst_candidate(&ids, &logged, &none));
    }
}
