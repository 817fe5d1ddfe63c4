use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::basis::{reduced_model_error, ReducedBasis, SnapshotMatrix};
use crate::hull_white_fem::{FullModel, FullSolution, ValueSurface, N_PARTS};
use crate::market_data::ParameterGroup;
use crate::rand_svd::{randomized_svd, RangeFinderOptions, SvdTarget};
use crate::{Error, Result};

/// Galerkin projection of a full model onto span(Q).
///
/// Every operator part is projected once, so a scenario's reduced system
/// QᵀA(ρ,t)Q = QᵀMQ − Δt Σ c_k(ρ,t) QᵀE_kQ costs O(d²) to assemble.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub full: Arc<FullModel>,
    pub basis: ReducedBasis,
    mass_d: DMatrix<f64>,
    parts_d: Vec<DMatrix<f64>>,
}

/// Reduced trajectory: column n of `coords` holds the post-event coordinates
/// at `times[n]`; `pre_event` keeps the coordinates before the update at each
/// key date.
#[derive(Debug, Clone)]
pub struct ReducedSolution {
    pub times: Vec<f64>,
    pub coords: DMatrix<f64>,
    pub pre_event: Vec<(usize, DVector<f64>)>,
    pub key_date_surfaces: Vec<ValueSurface>,
    pub value_at_spot: f64,
}

impl ReducedSolution {
    /// Coordinates solved for at step n, before any event update.
    pub fn solved_coords(&self, n: usize) -> DVector<f64> {
        match self.pre_event.iter().find(|(k, _)| *k == n) {
            Some((_, x)) => x.clone(),
            None => self.coords.column(n).into_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualAggregation {
    #[default]
    Max,
    Rms,
}

/// Projects the full model's operator parts onto `basis`.
pub fn project(full: Arc<FullModel>, basis: ReducedBasis) -> Result<ReducedModel> {
    if basis.m() != full.m() {
        return Err(Error::DimensionMismatch {
            expected: full.m(),
            got: basis.m(),
        });
    }
    let q = &basis.q;
    let qt = q.transpose();
    let mass_q = full.operators.mass.mul_dense(q);
    let parts_q: Vec<DMatrix<f64>> = full.operators.parts.iter().map(|e| e.mul_dense(q)).collect();
    let mass_d = &qt * &mass_q;
    let parts_d = parts_q.iter().map(|eq| &qt * eq).collect();
    Ok(ReducedModel {
        full,
        basis,
        mass_d,
        parts_d,
    })
}

impl ReducedModel {
    pub fn d(&self) -> usize {
        self.basis.d()
    }

    /// (A_d, B_d) of a step of length `dt` with operator coefficients `coeffs`.
    pub fn system(&self, coeffs: &[f64; N_PARTS], dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let mut a = self.mass_d.clone();
        for (c, p) in coeffs.iter().zip(&self.parts_d) {
            let s = -dt * c;
            a.zip_apply(p, |x, y| *x += s * y);
        }
        (a, self.mass_d.clone())
    }

    pub fn lift(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.basis.q * x
    }

    pub fn lift_all(&self, sol: &ReducedSolution) -> DMatrix<f64> {
        &self.basis.q * &sol.coords
    }

    pub fn restrict(&self, v: &[f64]) -> DVector<f64> {
        self.basis.q.tr_mul(&DVector::from_column_slice(v))
    }

    /// Backward sweep in reduced coordinates. At key dates the state is lifted,
    /// given the full model's coupon and put updates, and projected back.
    pub fn solve(&self, rho: &ParameterGroup) -> Result<ReducedSolution> {
        let full = &self.full;
        let grid = &full.time_grid;
        let n_steps = grid.steps();
        let d = self.d();
        let mut coords = DMatrix::zeros(d, n_steps + 1);
        let mut x = self.restrict(&full.terminal(rho));
        coords.set_column(n_steps, &x);
        let mut pre_event = Vec::new();
        let mut key_date_surfaces = Vec::new();
        let mut cached: Option<(([f64; N_PARTS], f64), nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>)> = None;
        for n in (1..=n_steps).rev() {
            let key = full.step_coefficients(rho, n);
            if !matches!(&cached, Some((k, _)) if *k == key) {
                let (a, _) = self.system(&key.0, key.1);
                cached = Some((key, a.lu()));
            }
            let lu = &cached.as_ref().unwrap().1;
            let rhs = &self.mass_d * &x;
            x = lu.solve(&rhs).ok_or_else(|| Error::LinearSolve {
                scenario: rho.scenario_id,
                t: grid.times[n - 1],
                message: "singular reduced system".into(),
            })?;
            if grid.events[n - 1] {
                let t = grid.times[n - 1];
                let mut v: Vec<f64> = self.lift(&x).iter().copied().collect();
                full.apply_events(rho, t, &mut v);
                pre_event.push((n - 1, x.clone()));
                x = self.restrict(&v);
                key_date_surfaces.push(ValueSurface { t, values: v });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::LinearSolve {
                    scenario: rho.scenario_id,
                    t: grid.times[n - 1],
                    message: "non-finite reduced state".into(),
                });
            }
            coords.set_column(n - 1, &x);
        }
        let value_at_spot = full
            .mesh
            .interpolation_weights(rho.spot, 0.0)
            .iter()
            .map(|&(k, w)| w * self.basis.q.row(k).dot(&x.transpose()))
            .sum();
        key_date_surfaces.reverse();
        Ok(ReducedSolution {
            times: grid.times.clone(),
            coords,
            pre_event,
            key_date_surfaces,
            value_at_spot,
        })
    }

    /// Full-space residual A Q x̃^{n−1} − B Q x^n of step n.
    pub fn residual_vector(&self, rho: &ParameterGroup, sol: &ReducedSolution, n: usize) -> DVector<f64> {
        let prev = self.lift(&sol.solved_coords(n - 1));
        let next = self.lift(&sol.coords.column(n).into_owned());
        let m = prev.len();
        let (mut out, mut tmp) = (vec![0.0; m], vec![0.0; m]);
        self.step_residual(rho, n, prev.as_slice(), next.as_slice(), &mut out, &mut tmp);
        DVector::from_vec(out)
    }

    /// Writes the step-n residual for lifted states into `out` and returns
    /// ‖B Q x^n‖. `tmp` is scratch of length M.
    fn step_residual(&self, rho: &ParameterGroup, n: usize, prev: &[f64], next: &[f64], out: &mut [f64], tmp: &mut [f64]) -> f64 {
        let ops = &self.full.operators;
        let (coeffs, dt) = self.full.step_coefficients(rho, n);
        ops.mass.mul_vec_into(next, tmp);
        let rhs_norm = tmp.iter().map(|v| v * v).sum::<f64>().sqrt();
        ops.mass.mul_vec_into(prev, out);
        for (o, t) in out.iter_mut().zip(tmp.iter()) {
            *o -= t;
        }
        for (c, e) in coeffs.iter().zip(&ops.parts) {
            if *c == 0.0 {
                continue;
            }
            e.mul_vec_into(prev, tmp);
            let s = -dt * c;
            for (o, t) in out.iter_mut().zip(tmp.iter()) {
                *o += s * t;
            }
        }
        rhs_norm
    }
}

/// Per-step relative residuals ‖A Q x̃^{n−1} − B Q x^n‖ / ‖B Q x^n‖, n = 1..N.
pub fn residual_norms(rm: &ReducedModel, rho: &ParameterGroup, sol: &ReducedSolution) -> Vec<f64> {
    let post = rm.lift_all(sol);
    let m = post.nrows();
    let flat = post.as_slice();
    let (mut out, mut tmp) = (vec![0.0; m], vec![0.0; m]);
    (1..sol.times.len())
        .map(|n| {
            let lifted_pre;
            let prev: &[f64] = match sol.pre_event.iter().find(|(k, _)| *k == n - 1) {
                Some((_, x)) => {
                    lifted_pre = rm.lift(x);
                    lifted_pre.as_slice()
                }
                None => &flat[(n - 1) * m..n * m],
            };
            let scale = rm.step_residual(rho, n, prev, &flat[n * m..(n + 1) * m], &mut out, &mut tmp);
            let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
            if scale > 0.0 {
                norm / scale
            } else {
                norm
            }
        })
        .collect()
}

/// Residual error estimator of one reduced solve, aggregated over time.
pub fn residual_norm(rm: &ReducedModel, rho: &ParameterGroup, sol: &ReducedSolution, agg: ResidualAggregation) -> f64 {
    let r = residual_norms(rm, rho, sol);
    match agg {
        ResidualAggregation::Max => r.iter().copied().fold(0.0, f64::max),
        ResidualAggregation::Rms => (r.iter().map(|x| x * x).sum::<f64>() / r.len().max(1) as f64).sqrt(),
    }
}

#[derive(Debug, Clone)]
pub struct DimensionSelection {
    pub basis: ReducedBasis,
    pub d: usize,
    pub eps_pod: f64,
    pub eps_rm: f64,
    pub converged: bool,
    /// (d, ε_POD, ε_RM) for every dimension tried.
    pub history: Vec<(usize, f64, f64)>,
}

/// Smallest d with ε_POD(d) + ε_RM(d) < `e_tol_d`, where ε_POD is the
/// discarded snapshot energy fraction and ε_RM the relative trajectory error
/// on the test scenario whose full solution is `test_full`.
pub fn select_dimension(
    full: &Arc<FullModel>,
    snapshots: &SnapshotMatrix,
    test: &ParameterGroup,
    test_full: &FullSolution,
    e_tol_d: f64,
    opts: &RangeFinderOptions,
) -> Result<DimensionSelection> {
    if snapshots.is_empty() {
        return Err(Error::Validation("empty snapshot matrix".into()));
    }
    let total = snapshots.frobenius_sq();
    let f = randomized_svd(&snapshots.matrix(), SvdTarget::Tolerance(1e-9 * total.sqrt()), opts)?;
    let all = ReducedBasis {
        q: f.phi,
        sigma: f.sigma,
        sigma_discarded_sq_sum: 0.0,
        total_energy: total,
        sources: snapshots.sources.clone(),
    };
    let mut history = Vec::new();
    let mut best: Option<DimensionSelection> = None;
    for d in 1..=all.d() {
        let basis = all.truncated(d)?;
        let eps_pod = basis.relative_projection_error();
        let rm = project(full.clone(), basis.clone())?;
        let sol = rm.solve(test)?;
        let eps_rm = reduced_model_error(&test_full.values, &rm.lift_all(&sol))?;
        history.push((d, eps_pod, eps_rm));
        let cand = DimensionSelection {
            basis,
            d,
            eps_pod,
            eps_rm,
            converged: eps_pod + eps_rm < e_tol_d,
            history: vec![],
        };
        if cand.converged {
            best = Some(cand);
            break;
        }
        if best.as_ref().is_none_or(|b| eps_pod + eps_rm < b.eps_pod + b.eps_rm) {
            best = Some(cand);
        }
    }
    let mut sel = best.ok_or(Error::RankDeficient {
        requested: 1,
        available: 0,
    })?;
    if !sel.converged {
        log::warn!("no reduced dimension met {e_tol_d:e}; keeping d = {}", sel.d);
    }
    sel.history = history;
    Ok(sel)
}
