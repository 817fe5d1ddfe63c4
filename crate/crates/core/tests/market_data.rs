use std::io::Write;

use morrisk_core::market_data::*;
use morrisk_core::Error;
use proptest::prelude::*;

fn constants() -> ModelConstants {
    HullWhite2F::new(0.75, 0.04, 0.0035, 0.008, 0.65).unwrap()
}

fn sloped_curve(tenors: &[f64]) -> Vec<f64> {
    tenors.iter().map(|t| 0.02 + 0.015 * (1.0 - (-t / 3.0).exp())).collect()
}

#[test]
fn calibrated_bonds_reprice_the_curve() {
    let tenors = standard_tenors();
    let z = sloped_curve(&tenors);
    let c = constants();
    let g = calibrate_theta(&tenors, &z, &c, 3).unwrap();
    assert_eq!(g.scenario_id, 3);
    assert_eq!(g.spot, z[0]);
    for (t, r) in tenors.iter().zip(&z) {
        let p = c.zero_bond(&g.theta, 0.0, *t, g.spot, 0.0);
        let target = (-r * t).exp();
        assert!((p - target).abs() < 1e-8, "T = {t}: {p} vs {target}");
    }
}

/// Deterministic short rate with σ ≈ 0: r' = θ(t) − αr, u ≡ 0. Bond prices from
/// RK4 on r and the trapezoid rule on ∫r, θ found segment by segment with bisection.
fn brute_force_theta(tenors: &[f64], z: &[f64], alpha: f64) -> Vec<f64> {
    let mut theta: Vec<f64> = Vec::new();
    let mut r_start = z[0];
    let mut int_start = 0.0;
    let mut t_start = 0.0;
    for (k, &tk) in tenors.iter().enumerate() {
        let target = z[k] * tk;
        let advance = |th: f64| {
            let steps = 2000;
            let h = (tk - t_start) / steps as f64;
            let (mut r, mut i) = (r_start, int_start);
            for _ in 0..steps {
                let f = |r: f64| th - alpha * r;
                let k1 = f(r);
                let k2 = f(r + 0.5 * h * k1);
                let k3 = f(r + 0.5 * h * k2);
                let k4 = f(r + h * k3);
                let r_next = r + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                i += 0.5 * h * (r + r_next);
                r = r_next;
            }
            (r, i)
        };
        let (mut lo, mut hi) = (-1.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if advance(mid).1 < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let th = 0.5 * (lo + hi);
        let (r, i) = advance(th);
        theta.push(th);
        r_start = r;
        int_start = i;
        t_start = tk;
    }
    theta
}

#[test]
fn vanishing_volatility_matches_deterministic_root_find() {
    let tenors = vec![0.5, 1.0, 2.0, 3.0, 5.0, 7.0, 10.0];
    let z = sloped_curve(&tenors);
    let c = HullWhite2F::new(0.75, 0.04, 1e-9, 1e-9, 0.0).unwrap();
    let g = calibrate_theta(&tenors, &z, &c, 0).unwrap();
    let oracle = brute_force_theta(&tenors, &z, 0.75);
    for (k, (a, b)) in g.theta.values.iter().zip(&oracle).enumerate() {
        assert!((a - b).abs() < 1e-6, "segment {k}: {a} vs {b}");
    }
}

#[test]
fn flat_curve_without_volatility_gives_alpha_times_rate() {
    let tenors = vec![1.0, 2.0, 5.0, 10.0];
    let c = HullWhite2F::new(0.5, 0.1, 1e-9, 1e-9, 0.0).unwrap();
    let g = calibrate_theta(&tenors, &[0.03; 4], &c, 0).unwrap();
    for v in &g.theta.values {
        assert!((v - 0.015).abs() < 1e-8, "{v}");
    }
}

#[test]
fn one_group_per_curve() {
    let tenors = standard_tenors();
    let hist = synthetic_history(&tenors, 300, 4).unwrap();
    let sims = simulate_yield_curves(&hist, 12, 1.0, 9).unwrap();
    let space = build_parameter_space(&sims, &constants()).unwrap();
    assert_eq!(space.len(), 12);
    for (i, g) in space.groups.iter().enumerate() {
        assert_eq!(g.scenario_id, i);
        assert_eq!(g.theta.values.len(), tenors.len());
    }
}

#[test]
fn bootstrap_is_deterministic_in_the_seed() {
    let hist = synthetic_history(&standard_tenors(), 200, 1).unwrap();
    let a = simulate_yield_curves(&hist, 20, 2.0, 5).unwrap();
    let b = simulate_yield_curves(&hist, 20, 2.0, 5).unwrap();
    let c = simulate_yield_curves(&hist, 20, 2.0, 6).unwrap();
    assert_eq!(a.rates, b.rates);
    assert_ne!(a.rates, c.rates);
}

#[test]
fn single_observation_is_insufficient_history() {
    let one = YieldCurveSet::new(vec![1.0, 2.0], vec![vec![0.01, 0.02]], "one").unwrap();
    assert!(matches!(
        simulate_yield_curves(&one, 5, 1.0, 0),
        Err(Error::InsufficientHistory(1))
    ));
}

#[test]
fn csv_errors_carry_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    };
    let ok = write("ok.csv", "date,1M,1Y,10Y\nd1,0.01,0.02,0.03\nd2,0.011,0.021,0.031\n");
    let set = load_yield_curves(&ok, CurveFormat::Csv).unwrap();
    assert_eq!(set.len(), 2);
    assert!((set.tenors[0] - 1.0 / 12.0).abs() < 1e-15);

    let bad_rate = write("bad.csv", "date,1M,1Y\nd1,0.01,0.02\nd2,0.01,abc\n");
    match load_yield_curves(&bad_rate, CurveFormat::Csv) {
        Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (2, 3)),
        other => panic!("{other:?}"),
    }
    let bad_tenor = write("tenor.csv", "date,1M,1Q\nd1,0.01,0.02\n");
    assert!(matches!(
        load_yield_curves(&bad_tenor, CurveFormat::Csv),
        Err(Error::Parse { row: 0, column: 3, .. })
    ));
    let short = write("short.csv", "date,1M,1Y\nd1,0.01\n");
    assert!(matches!(load_yield_curves(&short, CurveFormat::Csv), Err(Error::Parse { row: 1, .. })));
    let unsorted = write("unsorted.csv", "date,1Y,1M\nd1,0.01,0.02\n");
    assert!(matches!(load_yield_curves(&unsorted, CurveFormat::Csv), Err(Error::Validation(_))));
}

#[test]
fn csv_and_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let set = synthetic_history(&standard_tenors(), 5, 2).unwrap();
    let p = dir.path().join("c.csv");
    set.write_csv(&p).unwrap();
    let back = load_yield_curves(&p, CurveFormat::Csv).unwrap();
    assert_eq!(back.len(), 5);
    for (a, b) in set.rates.iter().flatten().zip(back.rates.iter().flatten()) {
        assert!((a - b).abs() < 1e-15);
    }
    let j = dir.path().join("c.json");
    std::fs::write(&j, serde_json::to_string(&set).unwrap()).unwrap();
    assert_eq!(load_yield_curves(&j, CurveFormat::Json).unwrap().rates, set.rates);
}

#[test]
fn tenor_labels() {
    assert_eq!(parse_tenor("10Y"), Some(10.0));
    assert_eq!(parse_tenor("6M"), Some(0.5));
    assert_eq!(parse_tenor("2.5"), Some(2.5));
    assert_eq!(parse_tenor("3X"), None);
    assert_eq!(standard_tenors().len(), 21);
}

#[test]
fn parameter_space_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let tenors = vec![1.0, 2.0, 5.0];
    let g = calibrate_theta(&tenors, &[0.02, 0.025, 0.03], &constants(), 0).unwrap();
    let space = ParameterSpace::new(tenors.clone(), vec![g]).unwrap();
    let p = dir.path().join("space.json");
    write_parameter_space(&space, &p).unwrap();
    assert_eq!(read_parameter_space(&p, &tenors).unwrap(), space);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn calibration_reprices_random_curves(level in 0.005f64..0.06, slope in -0.02f64..0.03) {
        let tenors: Vec<f64> = vec![0.25, 1.0, 2.0, 5.0, 10.0, 20.0];
        let z: Vec<f64> = tenors.iter().map(|t| level + slope * (1.0 - (-t / 4.0).exp())).collect();
        let c = constants();
        let g = calibrate_theta(&tenors, &z, &c, 0).unwrap();
        for (t, r) in tenors.iter().zip(&z) {
            let p = c.zero_bond(&g.theta, 0.0, *t, g.spot, 0.0);
            prop_assert!((p.ln() + r * t).abs() < 1e-8);
        }
    }

    #[test]
    fn bond_prices_decrease_with_rates(r in -0.01f64..0.08, dr in 1e-4f64..0.02, t in 0.1f64..30.0) {
        let c = constants();
        let th = PiecewiseTheta::constant(vec![1.0, 10.0], 0.02);
        prop_assert!(c.zero_bond(&th, 0.0, t, r + dr, 0.0) < c.zero_bond(&th, 0.0, t, r, 0.0));
    }
}
