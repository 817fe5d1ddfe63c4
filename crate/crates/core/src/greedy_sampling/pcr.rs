//! Principal component regression with cross-validated error estimates.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Rows of (features, target) pairs with a fold label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningData {
    pub features: DMatrix<f64>,
    pub targets: DVector<f64>,
    /// Scenario id of every row.
    pub ids: Vec<usize>,
}

impl LearningData {
    pub fn new(features: DMatrix<f64>, targets: DVector<f64>, ids: Vec<usize>) -> Result<Self> {
        if features.nrows() != targets.len() || ids.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: features.nrows(),
                got: targets.len(),
            });
        }
        Ok(Self {
            features,
            targets,
            ids,
        })
    }

    pub fn empty(m: usize) -> Self {
        Self {
            features: DMatrix::zeros(0, m),
            targets: DVector::zeros(0),
            ids: vec![],
        }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn push(&mut self, features: &[f64], target: f64, id: usize) -> Result<()> {
        let m = self.features.ncols();
        if features.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: features.len(),
            });
        }
        let n = self.len();
        let mut f = std::mem::replace(&mut self.features, DMatrix::zeros(0, 0)).insert_row(n, 0.0);
        f.row_mut(n).copy_from(&DVector::from_column_slice(features).transpose());
        self.features = f;
        self.targets = std::mem::replace(&mut self.targets, DVector::zeros(0)).push(target);
        self.ids.push(id);
        Ok(())
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(rows),
            targets: self.targets.select_rows(rows),
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
        }
    }
}

/// Fold label per row: a seeded permutation dealt round-robin, so fold sizes
/// differ by at most one when K does not divide the row count.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > n {
        return Err(Error::Validation(format!("need 2 ≤ K ≤ {n}, got K = {k}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        folds[row] = pos % k;
    }
    Ok(folds)
}

pub trait Predictor {
    fn predict(&self, x: &[f64]) -> f64;
}

/// Regression of targets on the leading principal components of the
/// standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub p: usize,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// m×p principal directions, column-major.
    pub loadings: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    /// Singular values of the standardized design, nonincreasing.
    pub sigma_hat: Vec<f64>,
}

impl SurrogateModel {
    pub fn m(&self) -> usize {
        self.mean.len()
    }

    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let m = self.m();
        (0..self.p)
            .map(|j| {
                (0..m)
                    .map(|i| (x[i] - self.mean[i]) / self.scale[i] * self.loadings[j * m + i])
                    .sum()
            })
            .collect()
    }
}

impl Predictor for SurrogateModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .scores(x)
                .iter()
                .zip(&self.coefficients)
                .map(|(s, c)| s * c)
                .sum::<f64>()
    }
}

/// Column means and standard deviations; constant columns get scale 1.
fn standardize(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let scale: Vec<f64> = x
        .column_iter()
        .zip(&mean)
        .map(|(c, mu)| {
            let var = c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 1e-300 && sd > 1e-12 * mu.abs() {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let z = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - mean[j]) / scale[j]);
    (mean, scale, z)
}

/// Singular values and right singular vectors of the standardized design.
fn principal_axes(z: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let svd = z.clone().svd(false, true);
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut axes = DMatrix::from_columns(&order.iter().map(|&i| vt.row(i).transpose()).collect::<Vec<_>>());
    // fewer rows than features: pad with zero directions
    while sigma.len() < z.ncols() {
        sigma.push(0.0);
        let c = axes.ncols();
        axes = axes.insert_column(c, 0.0);
    }
    (sigma, axes)
}

/// Fits PCR with `p` components. Components with vanishing variance are
/// dropped with a warning.
pub fn fit_pcr(data: &LearningData, p: usize) -> Result<SurrogateModel> {
    let (n, m) = data.features.shape();
    if p == 0 || p > m {
        return Err(Error::Validation(format!("need 1 ≤ p ≤ {m}, got {p}")));
    }
    if n < p + 1 {
        return Err(Error::Validation(format!("{n} rows cannot support {p} components")));
    }
    let (mean, scale, z) = standardize(&data.features);
    let (sigma_hat, axes) = principal_axes(&z);
    let tol = sigma_hat[0].max(1.0) * 1e-10;
    let usable = sigma_hat.iter().take(p).filter(|&&s| s > tol).count();
    if usable < p {
        log::warn!("feature matrix supports only {usable} of {p} requested components");
    }
    let y_mean = data.targets.mean();
    let yc = data.targets.add_scalar(-y_mean);
    let mut loadings = Vec::with_capacity(m * usable);
    let mut coefficients = Vec::with_capacity(usable);
    for j in 0..usable {
        let v = axes.column(j);
        let t = &z * v;
        coefficients.push(t.dot(&yc) / t.norm_squared());
        loadings.extend(v.iter());
    }
    Ok(SurrogateModel {
        p: usable,
        mean,
        scale,
        loadings,
        coefficients,
        intercept: y_mean,
        sigma_hat,
    })
}

/// Σ_{ℓ>p} σ̂_ℓ².
pub fn pca_projection_error(sigma_hat: &[f64], p: usize) -> f64 {
    sigma_hat.iter().skip(p).map(|s| s * s).sum()
}

/// Discarded fraction of the standardized feature energy.
pub fn relative_pca_error(sigma_hat: &[f64], p: usize) -> f64 {
    let total: f64 = sigma_hat.iter().map(|s| s * s).sum();
    if total > 0.0 {
        pca_projection_error(sigma_hat, p) / total
    } else {
        0.0
    }
}

/// Cross-validation results of one fit rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    /// Mean squared held-out error of each fold.
    pub fold_errors: Vec<f64>,
    pub msep_kcv: f64,
    pub msep_app: f64,
    /// (1/c_k) Σ_k (1/K) Σ_{i∉L_k} squared in-fold-training error.
    pub train_term: f64,
    pub msep_kcv_adj: f64,
}

fn squared_error<P: Predictor>(model: &P, data: &LearningData, row: usize) -> f64 {
    let x: Vec<f64> = data.features.row(row).iter().copied().collect();
    (model.predict(&x) - data.targets[row]).powi(2)
}

/// Mean squared residual of a model trained on all rows.
pub fn msep_apparent<P: Predictor>(data: &LearningData, model: &P) -> f64 {
    let n = data.len();
    (0..n).map(|i| squared_error(model, data, i)).sum::<f64>() / n as f64
}

/// K-fold MSEP: every row predicted by the model refit without its fold.
pub fn kfold_msep<P, F>(data: &LearningData, folds: &[usize], k: usize, fit: F) -> Result<f64>
where
    P: Predictor,
    F: Fn(&LearningData) -> Result<P>,
{
    Ok(cross_validate_inner(data, folds, k, &fit, false)?.msep_kcv)
}

/// Adjusted K-fold MSEP: MSEP_K-CV + MSEP_app − (1/c_k) Σ_k (1/K) Σ_{i∉L_k} e_{−k,i}².
pub fn msep_adjusted<P, F>(data: &LearningData, folds: &[usize], k: usize, fit: F) -> Result<CrossValidation>
where
    P: Predictor,
    F: Fn(&LearningData) -> Result<P>,
{
    cross_validate_inner(data, folds, k, &fit, true)
}

fn cross_validate_inner<P, F>(data: &LearningData, folds: &[usize], k: usize, fit: &F, adjust: bool) -> Result<CrossValidation>
where
    P: Predictor,
    F: Fn(&LearningData) -> Result<P>,
{
    let n = data.len();
    if folds.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: folds.len(),
        });
    }
    if k < 2 {
        return Err(Error::Validation("need K ≥ 2".into()));
    }
    let mut fold_errors = Vec::with_capacity(k);
    let mut held_out = 0.0;
    let mut train_term = 0.0;
    for f in 0..k {
        let test: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
        let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
        if test.is_empty() || train.is_empty() {
            return Err(Error::Validation(format!("fold {f} is empty or covers every row")));
        }
        let model = fit(&data.subset(&train))?;
        let fold_sum: f64 = test.iter().map(|&i| squared_error(&model, data, i)).sum();
        fold_errors.push(fold_sum / test.len() as f64);
        held_out += fold_sum;
        if adjust {
            let ts: f64 = train.iter().map(|&i| squared_error(&model, data, i)).sum();
            train_term += ts / k as f64;
        }
    }
    let msep_kcv = held_out / n as f64;
    let (msep_app, train_term) = if adjust {
        (msep_apparent(data, &fit(data)?), train_term / n as f64)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(CrossValidation {
        fold_errors,
        msep_kcv,
        msep_app,
        train_term,
        msep_kcv_adj: msep_kcv + msep_app - train_term,
    })
}

/// Sampling error of a PCR surrogate with its components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingError {
    pub p: usize,
    pub eps_pca: f64,
    pub cv: CrossValidation,
    pub eps_samp: f64,
    pub converged: bool,
}

/// ε_samp(p) = relative ε_PCA(p) + adjusted K-fold MSEP of the p-component fit.
pub fn sampling_error(data: &LearningData, folds: &[usize], k: usize, sigma_hat: &[f64], p: usize) -> Result<SamplingError> {
    let eps_pca = relative_pca_error(sigma_hat, p);
    let cv = msep_adjusted(data, folds, k, |d| fit_pcr(d, p))?;
    let eps_samp = eps_pca + cv.msep_kcv_adj;
    Ok(SamplingError {
        p,
        eps_pca,
        cv,
        eps_samp,
        converged: false,
    })
}

/// Raises p from 1 until ε_samp < `e_tol_samp`; returns the surrogate fitted on
/// all rows with the selected p. At p = max the result is flagged not converged.
pub fn select_surrogate(
    data: &LearningData,
    k: usize,
    e_tol_samp: f64,
    fold_seed: u64,
) -> Result<(SurrogateModel, SamplingError)> {
    let (n, m) = data.features.shape();
    let folds = assign_folds(n, k, fold_seed)?;
    let min_train = (0..k)
        .map(|f| folds.iter().filter(|&&x| x != f).count())
        .min()
        .unwrap_or(0);
    let p_max = m.min(min_train.saturating_sub(1)).min(n.saturating_sub(1));
    if p_max == 0 {
        return Err(Error::Validation(format!("{n} rows are too few for {k}-fold PCR")));
    }
    let (_, _, z) = standardize(&data.features);
    let (sigma_hat, _) = principal_axes(&z);
    let mut last = None;
    for p in 1..=p_max {
        let mut se = sampling_error(data, &folds, k, &sigma_hat, p)?;
        if se.eps_samp < e_tol_samp {
            se.converged = true;
            return Ok((fit_pcr(data, p)?, se));
        }
        last = Some(se);
    }
    let se = last.unwrap();
    log::warn!("sampling error {:.3e} above {e_tol_samp:e} at p = {p_max}", se.eps_samp);
    Ok((fit_pcr(data, p_max)?, se))
}
