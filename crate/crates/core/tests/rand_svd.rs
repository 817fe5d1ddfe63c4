use morrisk_core::rand_svd::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// U·diag(σ)·Vᵀ with Haar-like orthonormal factors from QR of Gaussian matrices.
fn with_spectrum(m: usize, n: usize, sigma: &[f64], seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = sigma.len();
    let mut gauss = |r: usize, c: usize| DMatrix::<f64>::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    let u = gauss(m, k).qr().q();
    let v = gauss(n, k).qr().q();
    let mut us = u.clone();
    for (j, s) in sigma.iter().enumerate() {
        us.column_mut(j).scale_mut(*s);
    }
    us * v.transpose()
}

fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    (q.transpose() * q - DMatrix::identity(q.ncols(), q.ncols())).amax()
}

#[test]
fn rank_target_matches_dense_svd() {
    let sigma: Vec<f64> = (0..40).map(|i| 0.7f64.powi(i)).collect();
    let v = with_spectrum(300, 80, &sigma, 1);
    let f = randomized_svd(&v, SvdTarget::Rank(10), &RangeFinderOptions::default()).unwrap();
    let d = dense_svd(&v);
    for k in 0..10 {
        assert!((f.sigma[k] - d.sigma[k]).abs() < 1e-10 * d.sigma[0], "σ_{k}");
        let dot = f.phi.column(k).dot(&d.phi.column(k)).abs();
        assert!((dot - 1.0).abs() < 1e-8, "mode {k}: {dot}");
    }
    assert!(orthonormality_defect(&f.phi) < 1e-12);
    assert!(orthonormality_defect(&f.psi) < 1e-12);
}

#[test]
fn tolerance_target_reconstructs_low_rank_input() {
    let v = with_spectrum(120, 50, &[5.0, 2.0, 1.0, 0.5, 0.1], 2);
    let f = randomized_svd(&v, SvdTarget::Tolerance(1e-10), &RangeFinderOptions::default()).unwrap();
    assert_eq!(f.rank(), 5);
    assert!((f.reconstruct() - &v).amax() < 1e-12);
}

#[test]
fn same_seed_same_factors() {
    let v = with_spectrum(100, 40, &[3.0, 1.0, 0.3, 0.1, 0.03], 3);
    let opts = RangeFinderOptions { probes: 10, seed: 42 };
    let a = randomized_svd(&v, SvdTarget::Tolerance(1e-6), &opts).unwrap();
    let b = randomized_svd(&v, SvdTarget::Tolerance(1e-6), &opts).unwrap();
    assert_eq!(a.phi, b.phi);
    assert_eq!(a.sigma, b.sigma);
}

#[test]
fn range_residual_respects_the_bound() {
    let sigma: Vec<f64> = (0..60).map(|i| (-0.3 * i as f64).exp()).collect();
    let v = with_spectrum(200, 60, &sigma, 4);
    for eps in [1e-2, 1e-4, 1e-6] {
        let r = range_finder(&v, eps, &RangeFinderOptions::default()).unwrap();
        let resid = (&v - &r.g * (r.g.transpose() * &v)).norm();
        assert!(r.residual_bound < eps);
        assert!(resid <= eps, "ε = {eps}: residual {resid}");
        assert!(orthonormality_defect(&r.g) < 1e-12);
    }
}

#[test]
fn zero_matrix_has_empty_range() {
    let v = DMatrix::<f64>::zeros(10, 5);
    let r = range_finder(&v, 1e-8, &RangeFinderOptions::default()).unwrap();
    assert_eq!(r.rank(), 0);
    let f = randomized_svd(&v, SvdTarget::Tolerance(1e-8), &RangeFinderOptions::default()).unwrap();
    assert_eq!(f.rank(), 0);
}

#[test]
fn invalid_targets_are_rejected() {
    let v = with_spectrum(20, 10, &[1.0, 0.5], 5);
    let o = RangeFinderOptions::default();
    assert!(randomized_svd(&v, SvdTarget::Rank(0), &o).is_err());
    assert!(randomized_svd(&v, SvdTarget::Rank(11), &o).is_err());
    assert!(randomized_svd(&v, SvdTarget::Rank(5), &o).is_err());
    assert!(range_finder(&v, -1.0, &o).is_err());
    assert!(range_finder(&v, 1.0, &RangeFinderOptions { probes: 0, seed: 0 }).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn singular_values_agree_with_dense(m in 5usize..80, n in 2usize..30, seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = DMatrix::<f64>::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng));
        let f = randomized_svd(&v, SvdTarget::Tolerance(1e-9), &RangeFinderOptions { probes: 10, seed }).unwrap();
        let d = dense_svd(&v);
        prop_assert_eq!(f.rank(), m.min(n));
        for (a, b) in f.sigma.iter().zip(&d.sigma) {
            prop_assert!((a - b).abs() < 1e-8 * d.sigma[0]);
        }
        let s: Vec<f64> = f.sigma.clone();
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
    }
}
