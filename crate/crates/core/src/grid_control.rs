//! Time-step and spatial-grid selection.
//!
//! The time step comes from a two-solve estimate of the first-order temporal
//! error constant. The mesh size comes from three-grid Richardson studies:
//! observed order by fixed-point iteration, a relative discretization-error
//! estimate and the grid convergence index (GCI).

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Outcome of the automatic time-step control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStepResult {
    /// Step after snapping onto the key-date lattice.
    pub dt: f64,
    /// Accepted step before snapping.
    pub dt_raw: f64,
    /// Last step predicted by the error formula (infinite for an exact solver).
    pub dt_predicted: f64,
    /// Final ratio K = Δt_max/Δt.
    pub k: usize,
    pub iterations: usize,
}

pub const DEFAULT_TIME_STEP_ITERATIONS: usize = 12;

/// Largest step with estimated temporal error below `e_tol_t`.
///
/// Each pass solves with Δt = Δt_max/K and predicts
/// Δt_opt = sqrt(e_tol·Δt²(K²−1)/|V(Δt) − V(Δt_max)|). The loop ends once
/// Δt_opt ≥ Δt; otherwise K becomes round(Δt_max/Δt_opt) + 1 (and at least
/// K + 1). The accepted step is snapped down so that every key date is a
/// whole number of steps from zero.
pub fn optimal_time_step<F>(solve: F, dt_max: f64, e_tol_t: f64, k0: usize, key_dates: &[f64]) -> Result<TimeStepResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    optimal_time_step_capped(solve, dt_max, e_tol_t, k0, key_dates, DEFAULT_TIME_STEP_ITERATIONS)
}

pub fn optimal_time_step_capped<F>(
    mut solve: F,
    dt_max: f64,
    e_tol_t: f64,
    k0: usize,
    key_dates: &[f64],
    max_iter: usize,
) -> Result<TimeStepResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(dt_max > 0.0) || !(e_tol_t > 0.0) || k0 < 2 {
        return Err(Error::Validation("need Δt_max > 0, e_tol > 0 and K0 ≥ 2".into()));
    }
    let finite = |v: f64, dt: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite(format!("solver output at Δt = {dt}")))
        }
    };
    let v_max = finite(solve(dt_max)?, dt_max)?;
    let mut k = k0;
    for it in 1..=max_iter {
        let dt = dt_max / k as f64;
        let v = finite(solve(dt)?, dt)?;
        let diff = (v - v_max).abs();
        if diff == 0.0 {
            return Ok(TimeStepResult {
                dt: snap_time_step(dt_max, key_dates),
                dt_raw: dt_max,
                dt_predicted: f64::INFINITY,
                k: 1,
                iterations: it,
            });
        }
        let kk = k as f64;
        let dt_opt = (e_tol_t * dt * dt * (kk * kk - 1.0) / diff).sqrt();
        if dt_opt >= dt {
            return Ok(TimeStepResult {
                dt: snap_time_step(dt, key_dates),
                dt_raw: dt,
                dt_predicted: dt_opt,
                k,
                iterations: it,
            });
        }
        k = ((dt_max / dt_opt).round() as usize + 1).max(k + 1);
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        message: "time-step control did not settle".into(),
    })
}

/// Largest step ≤ `dt` that divides the common period of the key dates.
pub fn snap_time_step(dt: f64, key_dates: &[f64]) -> f64 {
    let period = key_dates
        .iter()
        .filter(|&&d| d > 1e-12)
        .fold(0.0, |g, &d| float_gcd(g, d));
    if !(period > 1e-6) {
        return dt;
    }
    period / (period / dt - 1e-9).ceil().max(1.0)
}

fn float_gcd(a: f64, b: f64) -> f64 {
    let (mut a, mut b) = (a.max(b), a.min(b));
    let tol = 1e-9 * a.max(1.0);
    while b > tol {
        let r = a % b;
        a = b;
        b = if r > b - tol { 0.0 } else { r };
    }
    a
}

/// Observed order with its iteration count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderEstimate {
    pub p_hat: f64,
    pub iterations: usize,
    /// V1 = V2: the sequence is already grid-independent and p̂ = p_formal.
    pub grid_independent: bool,
}

/// Fixed point of p = ln[(g12^p − 1)·ΔV + g12^p] / ln(g12·g23) with
/// ΔV = (V3 − V2)/(V2 − V1), started at `p_formal`.
pub fn observed_order(v1: f64, v2: f64, v3: f64, g12: f64, g23: f64, p_formal: f64) -> Result<OrderEstimate> {
    if !(g12 > 1.0 && g23 > 1.0) {
        return Err(Error::Validation(format!("refinement ratios must exceed 1, got {g12}, {g23}")));
    }
    if v2 == v1 {
        return Ok(OrderEstimate {
            p_hat: p_formal,
            iterations: 0,
            grid_independent: true,
        });
    }
    let ratio = (v3 - v2) / (v2 - v1);
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::NonMonotoneConvergence { ratio });
    }
    let denom = (g12 * g23).ln();
    let mut p = p_formal;
    for it in 1..=100 {
        let gp = g12.powf(p);
        let arg = (gp - 1.0) * ratio + gp;
        if !(arg > 0.0) {
            return Err(Error::NonMonotoneConvergence { ratio });
        }
        let next = arg.ln() / denom;
        if !next.is_finite() {
            return Err(Error::Divergence(it));
        }
        if (next - p).abs() < 1e-3 {
            return Ok(OrderEstimate {
                p_hat: next,
                iterations: it,
                grid_independent: false,
            });
        }
        p = next;
    }
    Err(Error::Divergence(100))
}

/// Relative discretization error of the fine-grid value,
/// |V1 − V2| / (|V1|(g12^p − 1)).
pub fn richardson_error(v1: f64, v2: f64, g12: f64, p_hat: f64) -> Result<f64> {
    if v1 == 0.0 {
        return Err(Error::RelativeErrorUndefined);
    }
    let denom = g12.powf(p_hat) - 1.0;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::Validation(format!("g12^p − 1 = {denom}")));
    }
    Ok((v1 - v2).abs() / (v1.abs() * denom.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GciMode {
    TwoGrid,
    ThreeGridMatched,
}

/// Safety factor: 3 for two grids; 1.25 for three grids when p̂ is within 10%
/// of the formal order, 1.5 otherwise.
pub fn safety_factor(mode: GciMode, p_hat: f64, p_formal: f64) -> f64 {
    match mode {
        GciMode::TwoGrid => 3.0,
        GciMode::ThreeGridMatched => {
            if (p_hat - p_formal).abs() <= 0.1 * p_formal {
                1.25
            } else {
                1.5
            }
        }
    }
}

/// Grid convergence index of the fine-grid value.
pub fn gci(v1: f64, v2: f64, g12: f64, p_hat: f64, p_formal: f64, mode: GciMode) -> Result<f64> {
    Ok(safety_factor(mode, p_hat, p_formal) * richardson_error(v1, v2, g12, p_hat)?)
}

/// One three-grid study; grid 1 is the finest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridStudy {
    pub h: [f64; 3],
    pub m: [usize; 3],
    pub v: [f64; 3],
    pub g12: f64,
    pub g23: f64,
    pub p_formal: f64,
    /// Observed order, `None` when the three values did not converge monotonically.
    pub p_hat: Option<f64>,
    pub eps_h: f64,
    pub gci: f64,
}

impl GridStudy {
    /// Builds the estimates from three solved grids. A failed order estimate
    /// falls back to the formal order with the two-grid safety factor.
    pub fn evaluate(h: [f64; 3], m: [usize; 3], v: [f64; 3], g12: f64, g23: f64, p_formal: f64) -> Result<Self> {
        let order = observed_order(v[0], v[1], v[2], g12, g23, p_formal);
        let (p_hat, p_used, mode) = match order {
            Ok(o) => (Some(o.p_hat), o.p_hat, GciMode::ThreeGridMatched),
            Err(Error::NonMonotoneConvergence { .. }) | Err(Error::Divergence(_)) => {
                (None, p_formal, GciMode::TwoGrid)
            }
            Err(e) => return Err(e),
        };
        let eps_h = richardson_error(v[0], v[1], g12, p_used)?;
        let gci = safety_factor(mode, p_used, p_formal) * eps_h;
        Ok(Self {
            h,
            m,
            v,
            g12,
            g23,
            p_formal,
            p_hat,
            eps_h,
            gci,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSelection {
    pub h_selected: f64,
    pub m_selected: usize,
    pub study: GridStudy,
    pub history: Vec<GridStudy>,
    pub converged: bool,
}

/// Output of one grid solve: the scalar, the node count and the element size
/// the mesh actually achieved (it may differ from the requested one).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSolve {
    pub value: f64,
    pub m: usize,
    pub h: f64,
}

/// Refines h₁ ← h₁/g12 until the fine-grid Richardson estimate drops below
/// `e_tol_h` with a monotone three-grid sequence, for at most `max_iters`
/// studies. Each study is evaluated with the ratios of the achieved element
/// sizes. `h_selected` is the requested size of the selected fine grid.
pub fn select_grid<F>(
    solve_on: F,
    h_init: f64,
    e_tol_h: f64,
    g12: f64,
    g23: f64,
    max_iters: usize,
    p_formal: f64,
) -> Result<GridSelection>
where
    F: Fn(f64) -> Result<GridSolve> + Sync,
{
    if !(h_init > 0.0) || !(e_tol_h > 0.0) || max_iters == 0 {
        return Err(Error::Validation("need h_init > 0, e_tol_h > 0 and K ≥ 1".into()));
    }
    if !(g12 > 1.0 && g23 > 1.0) {
        return Err(Error::Validation("refinement ratios must exceed 1".into()));
    }
    // keyed on ln h to 1e-9 so that h/g·g hits the same entry
    let key = |h: f64| (h.ln() * 1e9).round() as i64;
    let mut cache: HashMap<i64, GridSolve> = HashMap::new();
    let mut history = Vec::new();
    let mut h1 = h_init;
    for _ in 0..max_iters {
        let hs = [h1, g12 * h1, g23 * g12 * h1];
        let missing: Vec<f64> = hs
            .iter()
            .copied()
            .filter(|&h| !cache.contains_key(&key(h)))
            .collect();
        let solved: Vec<Result<GridSolve>> = {
            use rayon::prelude::*;
            missing.par_iter().map(|&h| solve_on(h)).collect()
        };
        for (h, r) in missing.iter().zip(solved) {
            cache.insert(key(*h), r?);
        }
        let s = hs.map(|h| cache[&key(h)]);
        let (a12, a23) = (s[1].h / s[0].h, s[2].h / s[1].h);
        if !(a12 > 1.0 && a23 > 1.0) {
            return Err(Error::Validation(format!(
                "achieved element sizes {:?} are not strictly coarsening",
                s.map(|x| x.h)
            )));
        }
        let study = GridStudy::evaluate(
            s.map(|x| x.h),
            s.map(|x| x.m),
            s.map(|x| x.value),
            a12,
            a23,
            p_formal,
        )?;
        history.push(study.clone());
        if study.p_hat.is_some() && study.eps_h < e_tol_h {
            return Ok(GridSelection {
                h_selected: h1,
                m_selected: s[0].m,
                study,
                history,
                converged: true,
            });
        }
        h1 /= g12;
    }
    let study = history.last().unwrap().clone();
    log::warn!("grid selection exhausted {max_iters} refinements without meeting {e_tol_h:e}");
    Ok(GridSelection {
        h_selected: h1 * g12,
        m_selected: study.m[0],
        study,
        history,
        converged: false,
    })
}

/// Writes one row per study: h, M, V, p_hat, eps_h, GCI of the finest grid.
pub fn write_grid_study_csv(history: &[GridStudy], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["h", "M", "V", "p_hat", "eps_h", "GCI"])?;
    for s in history {
        w.write_record([
            format!("{:e}", s.h[0]),
            s.m[0].to_string(),
            format!("{:.12e}", s.v[0]),
            s.p_hat.map_or("nan".to_string(), |p| format!("{p:.6}")),
            format!("{:e}", s.eps_h),
            format!("{:e}", s.gci),
        ])?;
    }
    w.flush()?;
    Ok(())
}
