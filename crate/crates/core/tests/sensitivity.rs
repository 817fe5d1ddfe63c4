use std::f64::consts::PI;

use morrisk_core::sensitivity::*;
use morrisk_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn uniform(n: usize, p: usize, seed: u64, lo: f64, hi: f64) -> SampleMatrices {
    SampleMatrices::sample(n, p, seed, |rng, _| lo + (hi - lo) * rng.random::<f64>()).unwrap()
}

#[test]
fn additive_model_gives_variance_fractions() {
    let m = uniform(10_000, 3, 1, 0.0, 1.0);
    let r = sobol_indices(&|x: &[f64]| x[0] + 2.0 * x[1] + 3.0 * x[2], &m, &["a", "b", "c"]).unwrap();
    let exact = [1.0 / 14.0, 4.0 / 14.0, 9.0 / 14.0];
    for (f, e) in r.factors.iter().zip(exact) {
        assert!((f.s_i - e).abs() < 0.05, "{}: {} vs {e}", f.factor, f.s_i);
        assert!((f.s_ti - e).abs() < 0.05);
    }
    let sum: f64 = r.factors.iter().map(|f| f.s_i).sum();
    assert!((0.95..=1.05).contains(&sum));
    assert_eq!(r.factors[2].rank_local, 1);
    assert_eq!(r.factors[0].rank_global, 3);
}

#[test]
fn pure_interaction_has_no_first_order_effect() {
    let m = uniform(10_000, 2, 2, -1.0, 1.0);
    let r = sobol_indices(&|x: &[f64]| x[0] * x[1], &m, &["a", "b"]).unwrap();
    for f in &r.factors {
        assert!(f.s_i.abs() < 0.1, "{}", f.s_i);
        assert!(f.s_ti > 0.9, "{}", f.s_ti);
    }
}

#[test]
fn ishigami_reference_indices() {
    // a = 7, b = 0.1 on [−π, π]³
    let m = uniform(10_000, 3, 3, -PI, PI);
    let f = |x: &[f64]| x[0].sin() + 7.0 * x[1].sin().powi(2) + 0.1 * x[2].powi(4) * x[0].sin();
    let r = sobol_indices(&f, &m, &["x1", "x2", "x3"]).unwrap();
    let (a, b) = (7.0f64, 0.1f64);
    let v1 = 0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2);
    let v2 = a * a / 8.0;
    let v13 = b * b * PI.powi(8) * (1.0 / 18.0 - 1.0 / 50.0);
    let var = v1 + v2 + v13;
    let s = [v1 / var, v2 / var, 0.0];
    let st = [(v1 + v13) / var, v2 / var, v13 / var];
    for i in 0..3 {
        assert!((r.factors[i].s_i - s[i]).abs() < 0.05, "S_{i}: {} vs {}", r.factors[i].s_i, s[i]);
        assert!((r.factors[i].s_ti - st[i]).abs() < 0.05, "S_T{i}: {} vs {}", r.factors[i].s_ti, st[i]);
    }
}

#[test]
fn constant_output_is_undefined() {
    let m = uniform(100, 2, 4, 0.0, 1.0);
    assert!(matches!(sobol_indices(&|_: &[f64]| 3.0, &m, &["a", "b"]), Err(Error::UndefinedIndex)));
    assert!(matches!(sobol_indices(&|x: &[f64]| x[0], &m, &["a"]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn error_budget_sensitivity_ignores_constant_factors() {
    let dist = ErrorDistributions {
        eps_h: vec![1e-4, 2e-4, 3e-4, 4e-4],
        eps_pod: vec![1e-6],
        eps_rm: vec![1e-4, 5e-4],
        eps_samp: vec![2e-5, 2e-5],
    };
    let r = error_sensitivity(&dist, 10_000, 7).unwrap();
    assert_eq!(r.factors.len(), 4);
    assert_eq!(r.factors[1].s_i, 0.0);
    assert_eq!(r.factors[3].s_ti, 0.0);
    // Var(ε_h) = 1.25e-8, Var(ε_RM) = 4e-8
    assert!((r.factors[0].s_i - 1.25 / 5.25).abs() < 0.05);
    assert!((r.factors[2].s_i - 4.0 / 5.25).abs() < 0.05);
    let empty = ErrorDistributions { eps_pod: vec![], ..dist };
    assert!(matches!(error_sensitivity(&empty, 100, 0), Err(Error::Validation(_))));
}

#[test]
fn csv_lists_every_factor() {
    let dir = tempfile::tempdir().unwrap();
    let m = uniform(500, 2, 5, 0.0, 1.0);
    let r = sobol_indices(&|x: &[f64]| x[0] + x[1], &m, &["a", "b"]).unwrap();
    let p = dir.path().join("s.csv");
    write_sensitivity_csv(Some(&r), &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("factor,S_i,S_Ti,rank_local,rank_global,n,VarY"));
    write_sensitivity_csv(None, &p).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn indices_survive_affine_rescaling(scale in prop_oneof![-20.0f64..-0.05, 0.05f64..20.0], shift in -100.0f64..100.0, seed in 0u64..50) {
        let m = uniform(4_000, 3, seed, 0.0, 1.0);
        let f = |x: &[f64]| x[0] + 2.0 * x[1] * x[2] + x[2];
        let g = |x: &[f64]| scale * (f(x) + shift);
        let a = sobol_indices(&f, &m, &["a", "b", "c"]).unwrap();
        let b = sobol_indices(&g, &m, &["a", "b", "c"]).unwrap();
        for (x, y) in a.factors.iter().zip(&b.factors) {
            prop_assert!((x.s_ti - y.s_ti).abs() < 1e-9);
            prop_assert!((x.s_i - y.s_i).abs() < 1e-9);
        }
    }

    #[test]
    fn first_order_never_exceeds_total(c in prop::collection::vec(0.1f64..3.0, 3), k in 0.0f64..2.0, seed in 0u64..50) {
        let m = uniform(10_000, 3, seed, -1.0, 1.0);
        let f = |x: &[f64]| c[0] * x[0] + c[1] * (x[1].powi(2) - 1.0 / 3.0) + c[2] * x[2] + k * x[0] * x[2];
        let r = sobol_indices(&f, &m, &["a", "b", "c"]).unwrap();
        for fi in &r.factors {
            prop_assert!(fi.s_i >= -0.05);
            prop_assert!(fi.s_i <= fi.s_ti + 0.05);
            prop_assert!(fi.s_ti >= 0.0);
        }
    }
}
