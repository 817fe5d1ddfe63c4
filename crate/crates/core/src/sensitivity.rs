//! Variance-based sensitivity of the total error to its four parts.
//!
//! First-order indices use the Saltelli estimator with f(X̂) centred on the
//! pooled output mean ȳ, S_i = (1/n) Σ (f(X̂) − ȳ)(f(X̄ⁱ) − f(X̄)) / Var(Y);
//! total indices use the Jansen estimator
//! S_Ti = (1/2n) Σ (f(X̄) − f(X̄ⁱ))² / Var(Y), where X̄ⁱ is X̄ with column i
//! taken from X̂.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid_control::GridStudy;
use crate::greedy_sampling::{select_surrogate, LearningData, Predictor};
use crate::hull_white_fem::{build_mesh_cells, Bounds, BoundaryCondition, FullModel, Instrument, TimeGrid};
use crate::market_data::ParameterGroup;
use crate::pod_core::{project, reduced_model_error, ReducedBasis};
use crate::{Error, Result};

/// Two independent n×p samples and the p crossed matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrices {
    pub xbar: DMatrix<f64>,
    pub xhat: DMatrix<f64>,
    pub xcross: Vec<DMatrix<f64>>,
}

impl SampleMatrices {
    pub fn new(xbar: DMatrix<f64>, xhat: DMatrix<f64>) -> Result<Self> {
        if xbar.shape() != xhat.shape() {
            return Err(Error::DimensionMismatch {
                expected: xbar.len(),
                got: xhat.len(),
            });
        }
        let xcross = (0..xbar.ncols())
            .map(|i| {
                let mut x = xbar.clone();
                x.set_column(i, &xhat.column(i));
                x
            })
            .collect();
        Ok(Self { xbar, xhat, xcross })
    }

    /// Draws both matrices with `draw(rng, factor)`.
    pub fn sample<F>(n: usize, p: usize, seed: u64, mut draw: F) -> Result<Self>
    where
        F: FnMut(&mut ChaCha8Rng, usize) -> f64,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = || DMatrix::from_fn(n, p, |_, j| draw(&mut rng, j));
        let xbar = fill();
        let xhat = fill();
        Self::new(xbar, xhat)
    }

    pub fn n(&self) -> usize {
        self.xbar.nrows()
    }

    pub fn p(&self) -> usize {
        self.xbar.ncols()
    }
}

/// Model outputs on X̄, X̂ and every crossed matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluations {
    pub ybar: Vec<f64>,
    pub yhat: Vec<f64>,
    pub ycross: Vec<Vec<f64>>,
}

fn rows<F: Fn(&[f64]) -> f64 + Sync>(f: &F, x: &DMatrix<f64>) -> Vec<f64> {
    (0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            f(&row)
        })
        .collect()
}

pub fn evaluate<F: Fn(&[f64]) -> f64 + Sync>(f: &F, m: &SampleMatrices) -> Evaluations {
    Evaluations {
        ybar: rows(f, &m.xbar),
        yhat: rows(f, &m.xhat),
        ycross: m.xcross.iter().map(|x| rows(f, x)).collect(),
    }
}

/// Sample variance (1/(2n−1)) of the pooled X̄ and X̂ outputs.
pub fn output_variance(e: &Evaluations) -> f64 {
    let all: Vec<f64> = e.ybar.iter().chain(&e.yhat).copied().collect();
    let n = all.len() as f64;
    if all.len() < 2 {
        return 0.0;
    }
    let mean = all.iter().sum::<f64>() / n;
    all.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

pub fn first_order_indices(e: &Evaluations, var_y: f64) -> Result<Vec<f64>> {
    if !(var_y > 0.0) {
        return Err(Error::UndefinedIndex);
    }
    let n = e.ybar.len() as f64;
    // centring f(X̂) leaves the expectation alone (the difference has mean
    // zero) and keeps the estimate from scaling with the output mean
    let mean = (e.ybar.iter().sum::<f64>() + e.yhat.iter().sum::<f64>()) / (2.0 * n);
    Ok(e.ycross
        .iter()
        .map(|yc| {
            e.yhat
                .iter()
                .zip(yc)
                .zip(&e.ybar)
                .map(|((h, c), b)| (h - mean) * (c - b))
                .sum::<f64>()
                / n
                / var_y
        })
        .collect())
}

pub fn total_indices(e: &Evaluations, var_y: f64) -> Result<Vec<f64>> {
    if !(var_y > 0.0) {
        return Err(Error::UndefinedIndex);
    }
    let n = e.ybar.len() as f64;
    Ok(e.ycross
        .iter()
        .map(|yc| {
            e.ybar.iter().zip(yc).map(|(b, c)| (b - c).powi(2)).sum::<f64>() / (2.0 * n) / var_y
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorIndex {
    pub factor: String,
    pub s_i: f64,
    pub s_ti: f64,
    /// 1 for the largest index.
    pub rank_local: usize,
    pub rank_global: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub factors: Vec<FactorIndex>,
    pub var_y: f64,
    pub n: usize,
}

fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut r = vec![0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        r[i] = pos + 1;
    }
    r
}

/// First-order and total indices of `f` with named factors.
pub fn sobol_indices<F: Fn(&[f64]) -> f64 + Sync>(f: &F, m: &SampleMatrices, names: &[&str]) -> Result<SensitivityReport> {
    if names.len() != m.p() {
        return Err(Error::DimensionMismatch {
            expected: m.p(),
            got: names.len(),
        });
    }
    let e = evaluate(f, m);
    let var_y = output_variance(&e);
    let s = first_order_indices(&e, var_y)?;
    let st = total_indices(&e, var_y)?;
    let (rl, rg) = (ranks(&s), ranks(&st));
    Ok(SensitivityReport {
        factors: names
            .iter()
            .enumerate()
            .map(|(i, name)| FactorIndex {
                factor: name.to_string(),
                s_i: s[i],
                s_ti: st[i],
                rank_local: rl[i],
                rank_global: rg[i],
            })
            .collect(),
        var_y,
        n: m.n(),
    })
}

pub const ERROR_FACTORS: [&str; 4] = ["eps_h", "eps_pod", "eps_rm", "eps_samp"];

/// Empirical samples of the four numerical errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorDistributions {
    pub eps_h: Vec<f64>,
    pub eps_pod: Vec<f64>,
    pub eps_rm: Vec<f64>,
    pub eps_samp: Vec<f64>,
}

impl ErrorDistributions {
    pub fn sets(&self) -> [&[f64]; 4] {
        [&self.eps_h, &self.eps_pod, &self.eps_rm, &self.eps_samp]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensitivityConfig {
    /// Samples per error distribution.
    pub samples: usize,
    /// Rows of each Sobol sample matrix.
    pub n: usize,
    pub m_min: usize,
    pub m_max: usize,
    pub d_min: usize,
    pub d_max: usize,
    pub p_hat_min: usize,
    pub p_hat_max: usize,
    /// Grid refinement ratio of the ε_h studies.
    pub g: f64,
    pub seed: u64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            samples: 30,
            n: 10_000,
            m_min: 100,
            m_max: 2500,
            d_min: 5,
            d_max: 60,
            p_hat_min: 30,
            p_hat_max: 100,
            g: 1.5,
            seed: 0,
        }
    }
}

/// Inputs the error distributions are sampled from.
pub struct ErrorSources<'a> {
    pub bounds: Bounds,
    pub instrument: &'a Instrument,
    pub time_grid: &'a TimeGrid,
    pub boundary: BoundaryCondition,
    pub reference: &'a ParameterGroup,
    /// Full model of the selected grid and the basis built on it.
    pub full: &'a Arc<FullModel>,
    pub basis: &'a ReducedBasis,
    pub test: &'a ParameterGroup,
    pub test_values: &'a DMatrix<f64>,
    /// Feature rows with residuals from which candidate sets are drawn.
    pub pool: &'a LearningData,
    pub k_folds: usize,
    pub e_tol_samp: f64,
}

fn spread(lo: f64, hi: f64, k: usize, count: usize) -> f64 {
    if count <= 1 {
        lo
    } else {
        lo + (hi - lo) * k as f64 / (count - 1) as f64
    }
}

/// ε_h over grids spanning [m_min, m_max] nodes, ε_POD and ε_RM over reduced
/// dimensions in [d_min, d_max], ε_samp over random initial sets and candidate
/// counts in [p_hat_min, p_hat_max]. Failed samples are dropped with a warning.
pub fn build_error_distributions(src: &ErrorSources<'_>, cfg: &SensitivityConfig) -> Result<ErrorDistributions> {
    let count = cfg.samples.max(1);
    let solve_cells = |cells: usize| -> Result<f64> {
        let mesh = build_mesh_cells(src.bounds, cells, cells)?;
        let model = FullModel::with_time_grid(mesh, src.instrument.clone(), src.time_grid.clone(), src.boundary)?;
        Ok(model.solve(src.reference)?.value_at_spot)
    };
    let eps_h: Vec<f64> = (0..count)
        .into_par_iter()
        .filter_map(|k| {
            let m = spread(cfg.m_min as f64, cfg.m_max as f64, k, count);
            let c1 = ((m.sqrt() - 1.0).round() as usize).max(3);
            let c2 = ((c1 as f64 / cfg.g).round() as usize).max(2);
            let c3 = ((c2 as f64 / cfg.g).round() as usize).max(1);
            let run = || -> Result<f64> {
                let v = [solve_cells(c1)?, solve_cells(c2)?, solve_cells(c3)?];
                let (g12, g23) = (c1 as f64 / c2 as f64, c2 as f64 / c3 as f64);
                let h = [1.0, g12, g12 * g23];
                let study = GridStudy::evaluate(h, [(c1 + 1).pow(2), (c2 + 1).pow(2), (c3 + 1).pow(2)], v, g12, g23, 2.0)?;
                Ok(study.eps_h)
            };
            run().map_err(|e| log::warn!("ε_h sample at M≈{m:.0} dropped: {e}")).ok()
        })
        .collect();
    let d_cap = src.basis.d();
    let (eps_pod, eps_rm): (Vec<f64>, Vec<f64>) = (0..count)
        .into_par_iter()
        .filter_map(|k| {
            let d = (spread(cfg.d_min as f64, cfg.d_max as f64, k, count).round() as usize).clamp(1, d_cap);
            let run = || -> Result<(f64, f64)> {
                let b = src.basis.truncated(d)?;
                let pod = b.relative_projection_error();
                let rm = project(src.full.clone(), b)?;
                let sol = rm.solve(src.test)?;
                Ok((pod, reduced_model_error(src.test_values, &rm.lift_all(&sol))?))
            };
            run().map_err(|e| log::warn!("ε_POD/ε_RM sample at d = {d} dropped: {e}")).ok()
        })
        .unzip();
    let eps_samp: Vec<f64> = (0..count)
        .into_par_iter()
        .filter_map(|k| {
            let size = (spread(cfg.p_hat_min as f64, cfg.p_hat_max as f64, k, count).round() as usize)
                .min(src.pool.len());
            sample_sampling_error(src.pool, size, src.k_folds, src.e_tol_samp, cfg.seed.wrapping_add(k as u64))
                .map_err(|e| log::warn!("ε_samp sample {k} dropped: {e}"))
                .ok()
        })
        .collect();
    Ok(ErrorDistributions {
        eps_h,
        eps_pod,
        eps_rm,
        eps_samp,
    })
}

/// One ε_samp draw: a random quarter of `size` rows seeds a surrogate whose
/// top-ranked pool rows fill the set up to `size`; the sampling error of the
/// PCR fitted on that set is returned.
fn sample_sampling_error(pool: &LearningData, size: usize, k: usize, e_tol_samp: f64, seed: u64) -> Result<f64> {
    let n = pool.len();
    if size < 2 * k || n < size {
        return Err(Error::Validation(format!("pool of {n} rows cannot supply {size}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c0 = (size / 4).max(k + 2).min(size);
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, n, c0).into_vec();
    let (model, _) = select_surrogate(&pool.subset(&chosen), k, e_tol_samp, rng.random())?;
    let mut rest: Vec<(usize, f64)> = (0..n)
        .filter(|i| !chosen.contains(i))
        .map(|i| {
            let x: Vec<f64> = pool.features.row(i).iter().copied().collect();
            (i, model.predict(&x))
        })
        .collect();
    rest.sort_by(|a, b| b.1.total_cmp(&a.1));
    chosen.extend(rest.iter().take(size - c0).map(|r| r.0));
    let (_, se) = select_surrogate(&pool.subset(&chosen), k, e_tol_samp, rng.random())?;
    Ok(se.eps_samp)
}

/// Sobol indices of ε_T = ε_h + ε_POD + ε_RM + ε_samp with independent
/// factors resampled from the empirical distributions.
pub fn error_sensitivity(dist: &ErrorDistributions, n: usize, seed: u64) -> Result<SensitivityReport> {
    let sets = dist.sets();
    if let Some(i) = sets.iter().position(|s| s.is_empty()) {
        return Err(Error::Validation(format!("no samples for {}", ERROR_FACTORS[i])));
    }
    let m = SampleMatrices::sample(n, 4, seed, |rng, j| sets[j][rng.random_range(0..sets[j].len())])?;
    sobol_indices(&|x: &[f64]| x.iter().sum(), &m, &ERROR_FACTORS)
}

pub fn write_sensitivity_csv(report: Option<&SensitivityReport>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["factor", "S_i", "S_Ti", "rank_local", "rank_global", "n", "VarY"])?;
    if let Some(r) = report {
        for f in &r.factors {
            w.write_record([
                f.factor.clone(),
                format!("{:.6}", f.s_i),
                format!("{:.6}", f.s_ti),
                f.rank_local.to_string(),
                f.rank_global.to_string(),
                r.n.to_string(),
                format!("{:e}", r.var_y),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_are_a_permutation() {
        assert_eq!(ranks(&[0.1, 0.5, 0.3]), vec![3, 1, 2]);
    }

    #[test]
    fn zero_variance_is_undefined() {
        let m = SampleMatrices::sample(50, 2, 1, |_, _| 1.0).unwrap();
        let e = evaluate(&|x: &[f64]| x[0] + x[1], &m);
        assert!(matches!(first_order_indices(&e, output_variance(&e)), Err(Error::UndefinedIndex)));
    }

    #[test]
    fn crossed_matrix_differs_in_one_column() {
        let m = SampleMatrices::sample(5, 3, 2, |rng, _| rng.random::<f64>()).unwrap();
        for (i, x) in m.xcross.iter().enumerate() {
            for j in 0..3 {
                let src = if i == j { &m.xhat } else { &m.xbar };
                assert_eq!(x.column(j), src.column(j));
            }
        }
    }
}
