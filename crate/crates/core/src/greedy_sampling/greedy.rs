use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pcr::{select_surrogate, LearningData, Predictor, SurrogateModel};
use crate::hull_white_fem::{FullModel, FullSolution};
use crate::market_data::ParameterSpace;
use crate::pod_core::{
    pod_basis, project, reduced_model_error, residual_norm, PodTarget, ReducedBasis, ReducedModel,
    ResidualAggregation, SnapshotMatrix,
};
use crate::rand_svd::RangeFinderOptions;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreedyMode {
    Classical,
    Adaptive,
}

impl std::str::FromStr for GreedyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Self::Classical),
            "adaptive" => Ok(Self::Adaptive),
            _ => Err(Error::Config(format!("unknown greedy mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedyConfig {
    /// Candidate count of the classical variant.
    pub c: usize,
    /// Initial random candidates of the adaptive variant.
    pub c0: usize,
    /// Surrogate picks added per refill.
    pub c_k: usize,
    /// Candidate set size of the adaptive variant.
    pub c_max: usize,
    pub i_max: usize,
    /// Folds of the surrogate cross-validation.
    pub k_folds: usize,
    pub seed: u64,
    /// Stopping level of the largest residual (and, in adaptive mode, of the
    /// modeled relative error).
    pub e_tol: f64,
    pub e_tol_samp: f64,
    /// Discarded snapshot energy fraction of the working basis.
    pub basis_energy: f64,
    pub aggregation: ResidualAggregation,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            c: 40,
            c0: 10,
            c_k: 10,
            c_max: 40,
            i_max: 10,
            k_folds: 4,
            seed: 0,
            e_tol: 1e-4,
            e_tol_samp: 5e-4,
            basis_energy: 1e-9,
            aggregation: ResidualAggregation::Max,
        }
    }
}

/// One greedy iteration. Residual statistics are measured with the basis
/// built before the iteration; they are NaN while no basis exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyRecord {
    pub iteration: usize,
    pub chosen_id: Option<usize>,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub eps_rm_bef: f64,
    pub eps_rm_aft: f64,
    pub residual_aft: f64,
    pub d: usize,
    /// Error-model prediction at `max_residual` (adaptive only).
    pub modeled_error: Option<f64>,
}

/// Least-squares line log10 ε_RM = a + b·log10(residual).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub intercept: f64,
    pub slope: f64,
    pub points: usize,
}

impl ErrorModel {
    pub fn fit(pairs: &[(f64, f64)]) -> Option<Self> {
        let pts: Vec<(f64, f64)> = pairs
            .iter()
            .filter(|(r, e)| *r > 0.0 && *e > 0.0 && r.is_finite() && e.is_finite())
            .map(|(r, e)| (r.log10(), e.log10()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx < 1e-12 {
            return None;
        }
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        Some(Self {
            intercept: my - slope * mx,
            slope,
            points: pts.len(),
        })
    }

    pub fn predict(&self, residual: f64) -> f64 {
        10f64.powf(self.intercept + self.slope * residual.log10())
    }
}

#[derive(Debug, Clone)]
pub struct GreedyOutcome {
    pub mode: GreedyMode,
    pub basis: ReducedBasis,
    pub snapshots: SnapshotMatrix,
    pub trace: Vec<GreedyRecord>,
    /// Scenario ids solved with the full model, in order.
    pub trained_ids: Vec<usize>,
    pub full_solutions: Vec<FullSolution>,
    pub learning: LearningData,
    pub surrogate: Option<SurrogateModel>,
    pub error_model: Option<ErrorModel>,
    pub converged: bool,
}

impl GreedyOutcome {
    pub fn full_solves(&self) -> usize {
        self.trained_ids.len()
    }

    pub fn final_max_residual(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.max_residual)
    }
}

/// Residual estimator for each listed scenario, in parallel.
pub fn evaluate_residuals(rm: &ReducedModel, space: &ParameterSpace, ids: &[usize], agg: ResidualAggregation) -> Result<Vec<f64>> {
    ids.par_iter()
        .map(|&i| {
            let rho = &space.groups[i];
            let sol = rm.solve(rho)?;
            Ok(residual_norm(rm, rho, &sol, agg))
        })
        .collect()
}

/// Candidate with the largest value outside `exclude`; ties keep the first.
/// NaN values are never chosen.
pub fn worst_candidate(ids: &[usize], values: &[f64], exclude: &HashSet<usize>) -> Option<usize> {
    ids.iter()
        .zip(values)
        .filter(|(i, v)| !exclude.contains(i) && !v.is_nan())
        .fold(None, |best: Option<(usize, f64)>, (&i, &v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i)
}

struct Trainer<'a> {
    full: &'a Arc<FullModel>,
    space: &'a ParameterSpace,
    config: &'a GreedyConfig,
    snapshots: SnapshotMatrix,
    rm: Option<ReducedModel>,
    trained: Vec<usize>,
    solutions: Vec<FullSolution>,
    trace: Vec<GreedyRecord>,
    pairs: Vec<(f64, f64)>,
    opts: RangeFinderOptions,
}

impl<'a> Trainer<'a> {
    fn new(full: &'a Arc<FullModel>, space: &'a ParameterSpace, config: &'a GreedyConfig) -> Self {
        Self {
            full,
            space,
            config,
            snapshots: SnapshotMatrix::new(full.m()),
            rm: None,
            trained: vec![],
            solutions: vec![],
            trace: vec![],
            pairs: vec![],
            opts: RangeFinderOptions {
                probes: 10,
                seed: config.seed ^ 0x5eed,
            },
        }
    }

    fn residuals(&self, ids: &[usize]) -> Result<Vec<f64>> {
        match &self.rm {
            Some(rm) => evaluate_residuals(rm, self.space, ids, self.config.aggregation),
            None => Ok(vec![f64::NAN; ids.len()]),
        }
    }

    fn relative_error(&self, rm: &ReducedModel, id: usize, full: &FullSolution) -> Result<(f64, f64)> {
        let rho = &self.space.groups[id];
        let sol = rm.solve(rho)?;
        let e = reduced_model_error(&full.values, &rm.lift_all(&sol))?;
        Ok((e, residual_norm(rm, rho, &sol, self.config.aggregation)))
    }

    /// Full solve at `id`, snapshot update and basis rebuild.
    fn train(&mut self, id: usize, mut rec: GreedyRecord) -> Result<()> {
        let rho = &self.space.groups[id];
        let sol = self.full.solve(rho)?;
        if let Some(rm) = &self.rm {
            rec.eps_rm_bef = self.relative_error(rm, id, &sol)?.0;
            if rec.max_residual.is_finite() {
                self.pairs.push((rec.max_residual, rec.eps_rm_bef));
            }
        }
        self.snapshots.push_solution(&sol, id)?;
        let basis = pod_basis(&self.snapshots, PodTarget::Energy(self.config.basis_energy), &self.opts)?;
        let rm = project(self.full.clone(), basis)?;
        let (aft, res_aft) = self.relative_error(&rm, id, &sol)?;
        rec.eps_rm_aft = aft;
        rec.residual_aft = res_aft;
        rec.d = rm.d();
        if aft > 0.0 {
            self.pairs.push((res_aft, aft));
        }
        self.rm = Some(rm);
        self.trained.push(id);
        self.solutions.push(sol);
        self.trace.push(rec);
        Ok(())
    }

    fn record(&self, iteration: usize, chosen: Option<usize>, res: &[f64]) -> GreedyRecord {
        let (max, mean) = if res.iter().all(|r| r.is_finite()) && !res.is_empty() {
            (
                res.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                res.iter().sum::<f64>() / res.len() as f64,
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        GreedyRecord {
            iteration,
            chosen_id: chosen,
            max_residual: max,
            mean_residual: mean,
            eps_rm_bef: f64::NAN,
            eps_rm_aft: f64::NAN,
            residual_aft: f64::NAN,
            d: self.rm.as_ref().map_or(0, |r| r.d()),
            modeled_error: None,
        }
    }

    fn argmax(&self, ids: &[usize], values: &[f64]) -> Option<usize> {
        let trained: HashSet<usize> = self.trained.iter().copied().collect();
        worst_candidate(ids, values, &trained)
    }

    fn finish(self, mode: GreedyMode, learning: LearningData, surrogate: Option<SurrogateModel>, converged: bool) -> Result<GreedyOutcome> {
        let rm = self.rm.ok_or_else(|| Error::Validation("greedy ended without a basis".into()))?;
        Ok(GreedyOutcome {
            mode,
            basis: rm.basis,
            snapshots: self.snapshots,
            trace: self.trace,
            trained_ids: self.trained,
            full_solutions: self.solutions,
            learning,
            surrogate,
            error_model: ErrorModel::fit(&self.pairs),
            converged,
        })
    }
}

fn validate(space: &ParameterSpace, config: &GreedyConfig, need: usize) -> Result<()> {
    if config.i_max == 0 {
        return Err(Error::Validation("I_max must be at least 1".into()));
    }
    if need == 0 || need > space.len() {
        return Err(Error::Validation(format!(
            "candidate count {need} must lie in 1..={}",
            space.len()
        )));
    }
    Ok(())
}

/// Classical greedy on a fixed random candidate set of size `c`.
///
/// Iteration i evaluates the residual on every candidate with the current
/// basis, stops once the largest is below `e_tol`, and otherwise solves the
/// full model at the worst untrained candidate. The first iteration has no
/// basis and trains on a random candidate. At most `i_max` full solves are
/// made; a final evaluation follows the last one.
pub fn classical_greedy(full: &Arc<FullModel>, space: &ParameterSpace, config: &GreedyConfig) -> Result<GreedyOutcome> {
    validate(space, config, config.c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let candidates: Vec<usize> = sample(&mut rng, space.len(), config.c).into_vec();
    let mut t = Trainer::new(full, space, config);
    let m = space.tenors.len();
    let mut learning = LearningData::empty(m);
    let mut converged = false;
    for it in 1..=config.i_max + 1 {
        let res = t.residuals(&candidates)?;
        let mut rec = t.record(it, None, &res);
        if t.rm.is_some() {
            for (&i, &r) in candidates.iter().zip(&res) {
                learning.push(space.groups[i].features(), r, i)?;
            }
        }
        if rec.max_residual < config.e_tol {
            converged = true;
            t.trace.push(rec);
            break;
        }
        if it > config.i_max {
            t.trace.push(rec);
            break;
        }
        let chosen = if t.rm.is_none() {
            candidates[rng.random_range(0..candidates.len())]
        } else {
            match t.argmax(&candidates, &res) {
                Some(c) => c,
                None => {
                    t.trace.push(rec);
                    break;
                }
            }
        };
        rec.chosen_id = Some(chosen);
        t.train(chosen, rec)?;
    }
    t.finish(GreedyMode::Classical, learning, None, converged)
}

/// Adaptive greedy: the candidate set starts from `c0` random scenarios and is
/// refilled `c_k` at a time with the scenarios a PCR surrogate, trained on all
/// residuals seen so far, predicts to be worst, up to `c_max`. Stops once the
/// largest residual, or the relative error the log-log error model predicts
/// for it, falls below `e_tol`.
pub fn adaptive_greedy(full: &Arc<FullModel>, space: &ParameterSpace, config: &GreedyConfig) -> Result<GreedyOutcome> {
    validate(space, config, config.c_max)?;
    if config.c0 == 0 || config.c0 > config.c_max || config.c_k == 0 {
        return Err(Error::Validation("need 1 ≤ c0 ≤ c_max and c_k ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let p0: Vec<usize> = sample(&mut rng, space.len(), config.c0).into_vec();
    let mut t = Trainer::new(full, space, config);
    let m = space.tenors.len();
    let mut learning = LearningData::empty(m);
    let mut surrogate = None;
    let mut converged = false;
    let features: Vec<&[f64]> = space.groups.iter().map(|g| g.features()).collect();
    for it in 1..=config.i_max + 1 {
        if t.rm.is_none() {
            let chosen = p0[rng.random_range(0..p0.len())];
            let mut rec = t.record(it, Some(chosen), &[]);
            rec.chosen_id = Some(chosen);
            t.train(chosen, rec)?;
            continue;
        }
        let mut ids = p0.clone();
        let mut res = t.residuals(&ids)?;
        for (&i, &r) in ids.iter().zip(&res) {
            learning.push(features[i], r, i)?;
        }
        while ids.len() < config.c_max {
            let want = config.c_k.min(config.c_max - ids.len());
            let taken: HashSet<usize> = ids.iter().chain(&t.trained).copied().collect();
            let fresh = match fit_surrogate(&learning, config, it) {
                Some(model) => {
                    let pred: Vec<f64> = features.par_iter().map(|x| model.predict(x)).collect();
                    let spread = pred.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                        - pred.iter().copied().fold(f64::INFINITY, f64::min);
                    surrogate = Some(model);
                    if spread > 0.0 {
                        let mut order: Vec<usize> = (0..space.len()).filter(|i| !taken.contains(i)).collect();
                        order.sort_by(|&a, &b| pred[b].total_cmp(&pred[a]));
                        order.truncate(want);
                        order
                    } else {
                        log::warn!("surrogate predictions are constant; topping up at random");
                        random_fill(&mut rng, space.len(), &taken, want)
                    }
                }
                None => random_fill(&mut rng, space.len(), &taken, want),
            };
            if fresh.is_empty() {
                break;
            }
            let r = t.residuals(&fresh)?;
            for (&i, &v) in fresh.iter().zip(&r) {
                learning.push(features[i], v, i)?;
            }
            ids.extend(fresh);
            res.extend(r);
        }
        let mut rec = t.record(it, None, &res);
        let model = ErrorModel::fit(&t.pairs);
        rec.modeled_error = model.map(|em| em.predict(rec.max_residual));
        if rec.max_residual < config.e_tol || rec.modeled_error.is_some_and(|e| e < config.e_tol) {
            converged = true;
            t.trace.push(rec);
            break;
        }
        if it > config.i_max {
            t.trace.push(rec);
            break;
        }
        let Some(chosen) = t.argmax(&ids, &res) else {
            t.trace.push(rec);
            break;
        };
        rec.chosen_id = Some(chosen);
        t.train(chosen, rec)?;
    }
    if surrogate.is_none() && learning.len() > config.k_folds {
        surrogate = fit_surrogate(&learning, config, 0);
    }
    t.finish(GreedyMode::Adaptive, learning, surrogate, converged)
}

fn fit_surrogate(learning: &LearningData, config: &GreedyConfig, salt: usize) -> Option<SurrogateModel> {
    if learning.len() < config.k_folds.max(3) {
        return None;
    }
    match select_surrogate(learning, config.k_folds, config.e_tol_samp, config.seed.wrapping_add(salt as u64)) {
        Ok((model, _)) => Some(model),
        Err(e) => {
            log::warn!("surrogate fit failed: {e}");
            None
        }
    }
}

fn random_fill(rng: &mut ChaCha8Rng, s: usize, taken: &HashSet<usize>, want: usize) -> Vec<usize> {
    let pool: Vec<usize> = (0..s).filter(|i| !taken.contains(i)).collect();
    let want = want.min(pool.len());
    sample(rng, pool.len(), want).into_iter().map(|k| pool[k]).collect()
}

/// Greedy trace CSV.
pub fn write_trace_csv(trace: &[GreedyRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "iteration",
        "chosen_id",
        "max_residual",
        "mean_residual",
        "eps_rm_bef",
        "eps_rm_aft",
        "d",
        "modeled_error",
    ])?;
    for r in trace {
        w.write_record([
            r.iteration.to_string(),
            r.chosen_id.map_or(String::new(), |c| c.to_string()),
            format!("{:e}", r.max_residual),
            format!("{:e}", r.mean_residual),
            format!("{:e}", r.eps_rm_bef),
            format!("{:e}", r.eps_rm_aft),
            r.d.to_string(),
            r.modeled_error.map_or(String::new(), |e| format!("{e:e}")),
        ])?;
    }
    w.flush()?;
    Ok(())
}
