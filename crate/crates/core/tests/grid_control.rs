use std::sync::atomic::{AtomicUsize, Ordering};

use morrisk_core::grid_control::*;
use morrisk_core::Error;
use proptest::prelude::*;

/// Root of ln[(g12^p − 1)ΔV + g12^p] − p·ln(g12·g23) by bisection on [0.05, 8].
fn order_by_bisection(v1: f64, v2: f64, v3: f64, g12: f64, g23: f64) -> f64 {
    let dv = (v3 - v2) / (v2 - v1);
    let f = |p: f64| ((g12.powf(p) - 1.0) * dv + g12.powf(p)).ln() - p * (g12 * g23).ln();
    let (mut lo, mut hi) = (0.05, 8.0);
    assert!(f(lo) * f(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn observed_order_matches_bisection_with_higher_order_terms() {
    let value = |h: f64| 0.8 + 0.3 * h * h + 0.9 * h * h * h;
    for (h1, g12, g23) in [(0.05, 1.5, 1.5), (0.02, 2.0, 2.0), (0.1, 1.4, 1.7)] {
        let (v1, v2, v3) = (value(h1), value(g12 * h1), value(g12 * g23 * h1));
        let p = observed_order(v1, v2, v3, g12, g23, 2.0).unwrap().p_hat;
        let oracle = order_by_bisection(v1, v2, v3, g12, g23);
        assert!((p - oracle).abs() < 5e-3, "{p} vs {oracle}");
        assert!(p > 2.0);
    }
}

#[test]
fn exact_power_law_recovers_its_order() {
    let h = [0.1, 0.15, 0.225];
    let v = h.map(|x| 1.0 - 0.7 * x * x);
    let o = observed_order(v[0], v[1], v[2], 1.5, 1.5, 2.0).unwrap();
    assert!((o.p_hat - 2.0).abs() < 1e-6);
    assert!(!o.grid_independent);
}

#[test]
fn richardson_reference_value() {
    assert!((richardson_error(1.0, 1.003, 2.0, 2.0).unwrap() - 0.001).abs() < 1e-15);
    assert!(matches!(richardson_error(0.0, 1.0, 2.0, 2.0), Err(Error::RelativeErrorUndefined)));
}

#[test]
fn gci_safety_factors() {
    let r = richardson_error(1.0, 1.003, 2.0, 2.0).unwrap();
    let matched = gci(1.0, 1.003, 2.0, 2.0, 2.0, GciMode::ThreeGridMatched).unwrap();
    assert!((matched - 1.25 * r).abs() < 1e-15);
    let off = gci(1.0, 1.003, 2.0, 2.5, 2.0, GciMode::ThreeGridMatched).unwrap();
    assert!((off - 1.5 * richardson_error(1.0, 1.003, 2.0, 2.5).unwrap()).abs() < 1e-15);
    assert_eq!(safety_factor(GciMode::TwoGrid, 2.0, 2.0), 3.0);
}

#[test]
fn oscillating_values_are_non_monotone() {
    assert!(matches!(
        observed_order(1.0, 1.1, 1.05, 1.5, 1.5, 2.0),
        Err(Error::NonMonotoneConvergence { .. })
    ));
    let s = GridStudy::evaluate([0.1, 0.15, 0.225], [9, 5, 3], [1.0, 1.1, 1.05], 1.5, 1.5, 2.0).unwrap();
    assert!(s.p_hat.is_none());
    assert!((s.gci - 3.0 * s.eps_h).abs() < 1e-15);
}

#[test]
fn equal_fine_values_are_grid_independent() {
    let o = observed_order(2.0, 2.0, 2.1, 1.5, 1.5, 2.0).unwrap();
    assert!(o.grid_independent);
    assert_eq!(o.p_hat, 2.0);
}

/// Positive root of C·Δt² − e·Δt − e·Δt_max = 0.
fn linear_error_fixed_point(c: f64, e: f64, dt_max: f64) -> f64 {
    (e + (e * e + 4.0 * c * e * dt_max).sqrt()) / (2.0 * c)
}

#[test]
fn time_step_matches_closed_form_for_linear_error() {
    for (c, e, dt_max) in [(0.02, 1e-4, 0.25), (0.5, 1e-5, 1.0), (0.003, 1e-6, 0.5)] {
        let r = optimal_time_step(|dt| Ok(0.97 + c * dt), dt_max, e, 2, &[]).unwrap();
        let star = linear_error_fixed_point(c, e, dt_max);
        assert!((r.dt - star).abs() / star < 0.2, "{} vs {star}", r.dt);
        assert!(r.dt_predicted >= r.dt_raw);
    }
}

#[test]
fn exact_solver_keeps_the_largest_step() {
    let r = optimal_time_step(|_| Ok(1.0), 0.5, 1e-4, 2, &[1.0, 2.0]).unwrap();
    assert_eq!(r.dt, 0.5);
    assert!(r.dt_predicted.is_infinite());
}

#[test]
fn time_step_errors() {
    assert!(matches!(
        optimal_time_step(|_| Ok(1.0), 0.0, 1e-4, 2, &[]),
        Err(Error::Validation(_))
    ));
    assert!(matches!(
        optimal_time_step(|_| Ok(f64::NAN), 0.5, 1e-4, 2, &[]),
        Err(Error::NonFinite(_))
    ));
    assert!(matches!(
        optimal_time_step_capped(|dt| Ok(dt.sqrt()), 1.0, 1e-12, 2, &[], 3),
        Err(Error::NoConvergence { .. })
    ));
}

#[test]
fn snapped_steps_divide_every_key_date() {
    let dates = [1.0, 2.0, 3.5, 10.0];
    for dt in [0.3, 0.07, 0.5, 2.0] {
        let s = snap_time_step(dt, &dates);
        assert!(s <= dt + 1e-12);
        for d in dates {
            let n = d / s;
            assert!((n - n.round()).abs() < 1e-9, "dt {dt} → {s}, date {d}");
        }
    }
    assert_eq!(snap_time_step(0.3, &[1.0, 2.0]), 0.25);
}

#[test]
fn select_grid_stops_once_the_estimate_meets_the_tolerance() {
    let calls = AtomicUsize::new(0);
    let solve = |h: f64| {
        calls.fetch_add(1, Ordering::Relaxed);
        Ok(GridSolve {
            value: 2.0 + 0.4 * h * h,
            m: (1.0 / (h * h)) as usize,
            h,
        })
    };
    // ε_h ≈ 0.2·h², met first at h = 0.1/1.5² ≈ 0.0444
    let sel = select_grid(solve, 0.1, 5e-4, 1.5, 1.5, 6, 2.0).unwrap();
    assert!(sel.converged);
    assert_eq!(sel.history.len(), 3);
    assert!((sel.h_selected - 0.1 / 2.25).abs() < 1e-12);
    // each refinement reuses two cached grids
    assert_eq!(calls.load(Ordering::Relaxed), 5);
    assert!((sel.study.p_hat.unwrap() - 2.0).abs() < 1e-6);
}

#[test]
fn select_grid_reports_exhaustion() {
    let solve = |h: f64| Ok(GridSolve { value: 1.0 + h, m: 1, h });
    let sel = select_grid(solve, 0.1, 1e-9, 2.0, 2.0, 2, 2.0).unwrap();
    assert!(!sel.converged);
    assert_eq!(sel.history.len(), 2);
    assert!((sel.h_selected - 0.05).abs() < 1e-15);
}

#[test]
fn grid_study_csv_has_one_row_per_study() {
    let solve = |h: f64| Ok(GridSolve { value: 1.0 + h * h, m: 1, h });
    let sel = select_grid(solve, 0.2, 1e-6, 2.0, 2.0, 3, 2.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.csv");
    write_grid_study_csv(&sel.history, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), sel.history.len() + 1);
    assert!(text.starts_with("h,M,V,p_hat,eps_h,GCI"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn power_laws_are_recovered(p in 1.0f64..3.0, g12 in 1.3f64..2.5, g23 in 1.3f64..2.5, c in -2.0f64..2.0, h1 in 0.01f64..0.1) {
        prop_assume!(c.abs() > 0.05);
        let v = |h: f64| 1.0 + c * h.powf(p);
        let o = observed_order(v(h1), v(g12 * h1), v(g12 * g23 * h1), g12, g23, 2.0).unwrap();
        prop_assert!((o.p_hat - p).abs() < 0.02, "{} vs {p}", o.p_hat);
    }

    #[test]
    fn estimates_are_scale_invariant(scale in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], c in 0.1f64..1.0) {
        let v = [1.0 + c * 0.01, 1.0 + c * 0.0225 + 0.01 * 0.0034, 1.0 + c * 0.050625 + 0.01 * 0.0114];
        let a = GridStudy::evaluate([0.1, 0.15, 0.225], [1, 1, 1], v, 1.5, 1.5, 2.0).unwrap();
        let b = GridStudy::evaluate([0.1, 0.15, 0.225], [1, 1, 1], v.map(|x| x * scale), 1.5, 1.5, 2.0).unwrap();
        prop_assert!((a.p_hat.unwrap() - b.p_hat.unwrap()).abs() < 1e-9);
        prop_assert!((a.eps_h - b.eps_h).abs() <= 1e-9 * a.eps_h);
    }
}
