use std::cell::Cell;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::PipelineConfig;
use super::report::{
    histogram, market_risk_class, percentile_scenarios, var_vev, RiskReport, ScenarioValue, SolveCounts, SolverKind,
    Timings,
};
use crate::greedy_sampling::{
    adaptive_greedy, classical_greedy, evaluate_residuals, select_surrogate, GreedyConfig, GreedyMode, GreedyOutcome, LearningData,
};
use crate::grid_control::{optimal_time_step_capped, select_grid, GridSolve, snap_time_step, GridSelection, TimeStepResult};
use crate::hull_white_fem::{build_mesh, default_bounds, h_for_nodes, Bounds, FullModel, Instrument};
use crate::market_data::{
    build_parameter_space, load_yield_curves, simulate_yield_curves_with, standard_tenors, synthetic_history,
    CurveFormat, ParameterSpace, YieldCurveSet,
};
use crate::pod_core::{project, select_dimension, ErrorBudget};
use crate::rand_svd::{dense_svd, randomized_svd, RangeFinderOptions, SvdTarget};
use crate::sensitivity::{build_error_distributions, error_sensitivity, ErrorSources};
use crate::{Error, Result};

/// Market data, parameter space and instrument of a run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: PipelineConfig,
    pub curves: YieldCurveSet,
    pub space: ParameterSpace,
    pub instrument: Instrument,
    pub bounds: Bounds,
    /// Scenario closest to the standardized mean θ; drives grid control.
    pub reference: usize,
}

fn curve_format(path: &std::path::Path) -> CurveFormat {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        CurveFormat::Json
    } else {
        CurveFormat::Csv
    }
}

/// Scenario indices by standardized feature distance to the mean, nearest first.
fn by_centrality(space: &ParameterSpace) -> Vec<usize> {
    let n = space.len() as f64;
    let p = space.tenors.len();
    let mut mean = vec![0.0; p];
    for g in &space.groups {
        for (m, x) in mean.iter_mut().zip(g.features()) {
            *m += x / n;
        }
    }
    let mut sd = vec![0.0; p];
    for g in &space.groups {
        for (j, x) in g.features().iter().enumerate() {
            sd[j] += (x - mean[j]).powi(2) / n;
        }
    }
    let dist: Vec<f64> = space
        .groups
        .iter()
        .map(|g| {
            g.features()
                .iter()
                .enumerate()
                .map(|(j, x)| if sd[j] > 0.0 { (x - mean[j]).powi(2) / sd[j] } else { 0.0 })
                .sum()
        })
        .collect();
    let mut order: Vec<usize> = (0..space.len()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    order
}

pub fn prepare(config: &PipelineConfig) -> Result<Prepared> {
    config.validate()?;
    let m = &config.market;
    let curves = match &m.curves {
        Some(path) => load_yield_curves(path, curve_format(path))?,
        None => {
            let history = match &m.history {
                Some(path) => load_yield_curves(path, curve_format(path))?,
                None => synthetic_history(&standard_tenors(), m.synthetic_days, m.history_seed)?,
            };
            simulate_yield_curves_with(&history, m.scenarios, m.horizon, m.seed, &m.bootstrap)?
        }
    };
    let space = build_parameter_space(&curves, &m.model)?;
    let instrument = match &config.instrument {
        Some(path) => Instrument::from_json_file(path)?,
        None => Instrument::steepener(),
    };
    let bounds = default_bounds(&space, config.grid.n_sd)?;
    let reference = by_centrality(&space)[0];
    log::info!("{} scenarios, reference scenario {reference}", space.len());
    Ok(Prepared {
        config: config.clone(),
        curves,
        space,
        instrument,
        bounds,
        reference,
    })
}

/// Selected time step and grid with the full model built on them.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub time_step: Option<TimeStepResult>,
    pub time_step_converged: bool,
    pub dt: f64,
    pub grid: GridSelection,
    pub full: Arc<FullModel>,
    pub diagnostic_solves: usize,
    pub elapsed: f64,
}

/// Runs the time-step controller on the initial grid, then the grid
/// selection with the chosen step. With `m_fixed` a single three-grid study
/// at that size supplies ε_h.
pub fn discretize(prep: &Prepared) -> Result<Discretization> {
    let t0 = Instant::now();
    let g = &prep.config.grid;
    let tol = &prep.config.tolerances;
    let rho = &prep.space.groups[prep.reference];
    let key_dates = prep.instrument.key_dates();
    let solves = AtomicUsize::new(0);
    let value_on = |h: f64, dt: f64| -> Result<GridSolve> {
        let mesh = build_mesh(prep.bounds, h)?;
        let (m, h) = (mesh.m(), mesh.effective_h());
        let model = FullModel::new(mesh, prep.instrument.clone(), dt, g.boundary)?;
        solves.fetch_add(1, Ordering::Relaxed);
        Ok(GridSolve {
            value: model.solve(rho)?.value_at_spot,
            m,
            h,
        })
    };
    let h_init = g.h_init.unwrap_or_else(|| h_for_nodes(&prep.bounds, g.m_fixed.unwrap_or(g.m_init)));
    let (time_step, time_step_converged, dt) = match g.dt_fixed {
        Some(dt) => (None, true, snap_time_step(dt, &key_dates)),
        None => {
            let last = Cell::new(g.dt_max);
            let r = optimal_time_step_capped(
                |dt| {
                    last.set(dt);
                    value_on(h_init, dt).map(|v| v.value)
                },
                g.dt_max,
                tol.e_tol_t,
                g.k0,
                &key_dates,
                g.time_step_iterations,
            );
            match r {
                Ok(r) => {
                    log::info!("time step {:.6} years after {} passes", r.dt, r.iterations);
                    (Some(r), true, r.dt)
                }
                Err(Error::NoConvergence { .. }) => {
                    let dt = snap_time_step(last.get(), &key_dates);
                    log::warn!("time-step controller did not converge; using Δt = {dt:.6}");
                    (None, false, dt)
                }
                Err(e) => return Err(e),
            }
        }
    };
    let iters = if g.m_fixed.is_some() { 1 } else { g.max_refinements };
    let grid = select_grid(|h| value_on(h, dt), h_init, tol.e_tol_h, g.g12, g.g23, iters, g.p_formal)?;
    log::info!(
        "grid M = {} with ε_h = {:.3e} ({})",
        grid.m_selected,
        grid.study.eps_h,
        if grid.converged { "converged" } else { "not converged" }
    );
    let mesh = build_mesh(prep.bounds, grid.h_selected)?;
    let full = Arc::new(FullModel::new(mesh, prep.instrument.clone(), dt, g.boundary)?);
    Ok(Discretization {
        time_step,
        time_step_converged,
        dt,
        grid,
        full,
        diagnostic_solves: solves.load(Ordering::Relaxed),
        elapsed: t0.elapsed().as_secs_f64(),
    })
}

pub fn run_greedy(prep: &Prepared, disc: &Discretization, mode: GreedyMode) -> Result<GreedyOutcome> {
    let cfg = GreedyConfig {
        e_tol_samp: prep.config.tolerances.e_tol_samp,
        ..prep.config.sampling.greedy
    };
    let out = match mode {
        GreedyMode::Classical => classical_greedy(&disc.full, &prep.space, &cfg)?,
        GreedyMode::Adaptive => adaptive_greedy(&disc.full, &prep.space, &cfg)?,
    };
    for id in &out.trained_ids {
        log::info!("full solve: scenario {id}");
    }
    Ok(out)
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Full run: discretization control, greedy basis, dimension selection,
/// sampling error, budget, valuation of every scenario and the risk figures.
/// Trained scenarios keep their full-model values; all others are valued
/// with the reduced model.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RiskReport> {
    let t_start = Instant::now();
    let prep = prepare(config)?;
    let disc = discretize(&prep)?;
    let tol = &config.tolerances;
    let space = &prep.space;
    let n = space.len();

    let t_q0 = Instant::now();
    let mode = config.sampling.mode;
    let outcome = run_greedy(&prep, &disc, mode)?;
    let trained: std::collections::HashSet<usize> = outcome.trained_ids.iter().copied().collect();

    // dimension selection on the most central untrained scenario
    let test_id = by_centrality(space)
        .into_iter()
        .find(|i| !trained.contains(i))
        .unwrap_or(prep.reference);
    let test = &space.groups[test_id];
    let t_full0 = Instant::now();
    let test_full = disc.full.solve(test)?;
    let t_full = secs(t_full0);
    let opts = RangeFinderOptions {
        seed: config.sampling.greedy.seed,
        ..Default::default()
    };
    let dim = select_dimension(&disc.full, &outcome.snapshots, test, &test_full, tol.e_tol_d, &opts)?;
    let rm = project(disc.full.clone(), dim.basis.clone())?;
    let t_q = secs(t_q0);
    log::info!("d = {} with ε_POD = {:.3e}, ε_RM = {:.3e}", dim.d, dim.eps_pod, dim.eps_rm);

    let t_red0 = Instant::now();
    rm.solve(test)?;
    let t_reduced = secs(t_red0);

    let k = config.sampling.greedy.k_folds;
    let (_, samp) = select_surrogate(&outcome.learning, k, tol.e_tol_samp, config.sampling.greedy.seed)?;
    let budget = ErrorBudget::new(
        disc.grid.study.eps_h,
        dim.eps_pod,
        dim.eps_rm,
        samp.eps_samp,
        [tol.e_tol_h, tol.e_tol_d, tol.e_tol_samp, tol.e_tol],
    )?;

    let full_values: std::collections::HashMap<usize, f64> = outcome
        .trained_ids
        .iter()
        .zip(&outcome.full_solutions)
        .map(|(&id, s)| (id, s.value_at_spot))
        .collect();
    let reduced_ids: Vec<usize> = (0..n).filter(|i| !trained.contains(i)).collect();
    let t_eva0 = Instant::now();
    let reduced_values = reduced_ids
        .par_iter()
        .map(|&i| rm.solve(&space.groups[i]).map(|s| s.value_at_spot))
        .collect::<Result<Vec<f64>>>()?;
    let t_eva = secs(t_eva0);
    let reduced_map: std::collections::HashMap<usize, f64> = reduced_ids.iter().copied().zip(reduced_values).collect();
    let scenarios: Vec<ScenarioValue> = space
        .groups
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let (value, solver) = match full_values.get(&i) {
                Some(&v) => (v, SolverKind::Full),
                None => (reduced_map[&i], SolverKind::Reduced),
            };
            ScenarioValue {
                scenario_id: g.scenario_id,
                spot: g.spot,
                value,
                solver,
            }
        })
        .collect();
    let counts = SolveCounts {
        full: outcome.full_solves(),
        reduced: reduced_ids.len(),
        diagnostic_full: disc.diagnostic_solves + 1,
    };
    log::info!("{} full and {} reduced valuations", counts.full, counts.reduced);

    let values: Vec<f64> = scenarios.iter().map(|s| s.value).collect();
    let percentiles = percentile_scenarios(&values)?;
    let percentile_ids = percentiles.positions.map(|p| scenarios[p].scenario_id);
    let holding = config.report.holding_period.unwrap_or(config.market.horizon);
    let df = config
        .report
        .discount_factor
        .unwrap_or_else(|| prep.curves.discount_factor(percentiles.positions[1], holding));
    let var = var_vev(&values, config.report.confidence, df, holding)?;

    let s = outcome.snapshots.matrix();
    let (mut t_rand, mut t_dense) = (None, None);
    if config.report.svd_benchmark {
        let t = Instant::now();
        // the rank the reduced model keeps
        randomized_svd(&s, SvdTarget::Rank(dim.d.min(s.nrows().min(s.ncols()))), &opts)?;
        t_rand = Some(secs(t));
        let t = Instant::now();
        dense_svd(&s);
        t_dense = Some(secs(t));
    }

    let sensitivity = match &config.sensitivity {
        Some(sc) => {
            let working = project(disc.full.clone(), outcome.basis.clone())?;
            let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
            let pool_ids: Vec<usize> = rand::seq::index::sample(&mut rng, n, sc.p_hat_max.min(n)).into_vec();
            let residuals = evaluate_residuals(&working, space, &pool_ids, config.sampling.greedy.aggregation)?;
            let mut pool = LearningData::empty(space.tenors.len());
            for (&i, &r) in pool_ids.iter().zip(&residuals) {
                pool.push(space.groups[i].features(), r, i)?;
            }
            let src = ErrorSources {
                bounds: prep.bounds,
                instrument: &prep.instrument,
                time_grid: &disc.full.time_grid,
                boundary: config.grid.boundary,
                reference: &space.groups[prep.reference],
                full: &disc.full,
                basis: &outcome.basis,
                test,
                test_values: &test_full.values,
                pool: &pool,
                k_folds: k,
                e_tol_samp: tol.e_tol_samp,
            };
            let dist = build_error_distributions(&src, sc)?;
            Some(error_sensitivity(&dist, sc.n, sc.seed)?)
        }
        None => None,
    };

    let all_full = n as f64 * t_full;
    let timings = Timings {
        t_grid_control: disc.elapsed,
        t_q,
        t_eva,
        t_full_per_scenario: t_full,
        t_reduced_per_scenario: t_reduced,
        speedup: all_full / (t_q + t_eva),
        per_scenario_speedup: t_full / t_reduced,
        svd_rows: s.nrows(),
        svd_cols: s.ncols(),
        t_svd_randomized: t_rand,
        t_svd_dense: t_dense,
        svd_speedup: t_rand.zip(t_dense).map(|(r, d)| d / r),
        t_total: secs(t_start),
    };
    let grid_converged = disc.grid.converged && disc.time_step_converged;
    let converged = budget.converged() && grid_converged && outcome.converged && dim.converged && samp.converged;
    if !converged {
        log::warn!("run not converged: ε_T = {:.3e} against e_tol = {:e}", budget.eps_total, budget.e_tol);
    }
    Ok(RiskReport {
        histogram: histogram(&values, config.report.histogram_bins),
        scenarios,
        percentiles,
        percentile_ids,
        market_risk_class: market_risk_class(var.vev),
        var,
        budget,
        counts,
        timings,
        mode,
        m: disc.full.m(),
        h: disc.grid.h_selected,
        dt: disc.dt,
        d: dim.d,
        time_step: disc.time_step,
        grid_history: disc.grid.history.clone(),
        greedy_trace: outcome.trace.clone(),
        dimension_history: dim.history.clone(),
        sensitivity,
        grid_converged,
        greedy_converged: outcome.converged,
        dimension_converged: dim.converged,
        sampling_converged: samp.converged,
        converged,
    })
}
