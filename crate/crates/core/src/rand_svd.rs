//! Adaptive randomized range finder and randomized SVD.
//!
//! The range finder grows an orthonormal basis G one Gaussian probe at a time
//! and stops once every probe in a rolling window is nearly annihilated by
//! I − GGᵀ. With probability at least 1 − 10^{−k} for a window of k probes,
//!
//! ‖V − GGᵀV‖₂ ≤ 10·sqrt(2/π)·max_i ‖(I − GGᵀ)V ω_i‖.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Constant of the a-posteriori bound, 10·sqrt(2/π).
pub const BOUND_FACTOR: f64 = 7.978845608028654;

/// Relative level below which a probe residual is treated as round-off.
const ROUNDOFF: f64 = 1e-13;

/// Range residual of a rank target relative to the last kept singular value.
const RANK_RESIDUAL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeFinderOptions {
    /// Probe window size.
    pub probes: usize,
    pub seed: u64,
}

impl Default for RangeFinderOptions {
    fn default() -> Self {
        Self { probes: 10, seed: 0 }
    }
}

/// Orthonormal range basis with its probabilistic residual bound.
#[derive(Debug, Clone)]
pub struct RangeBasis {
    pub g: DMatrix<f64>,
    /// 10·sqrt(2/π)·(largest probe residual in the final window).
    pub residual_bound: f64,
    /// Basis reached min(M, n) columns before meeting the tolerance.
    pub full_rank: bool,
}

impl RangeBasis {
    pub fn rank(&self) -> usize {
        self.g.ncols()
    }
}

/// Truncated SVD factors, singular values nonincreasing.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub phi: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub psi: DMatrix<f64>,
    /// Residual bound of the range finder that produced the factors.
    pub residual_bound: f64,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.phi.clone();
        for (j, s) in self.sigma.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.psi.transpose()
    }
}

/// What to keep from a randomized SVD.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SvdTarget {
    /// Range tolerance in the 2-norm; keeps every mode above round-off.
    Tolerance(f64),
    /// Leading `k` modes. The range is grown until its residual ρ is below
    /// 1e-3·σ_k; the kept singular values then carry a relative error of at
    /// most about ρ²/(2σ_k²) = 5e-7.
    Rank(usize),
}

struct AdaptiveRange<'a> {
    v: &'a DMatrix<f64>,
    /// Basis columns 0..k of a preallocated block.
    q: DMatrix<f64>,
    k: usize,
    window: VecDeque<DVector<f64>>,
    /// Products V·ω drawn ahead in blocks, each with the basis size it has
    /// already been orthogonalized against.
    pending: VecDeque<(DVector<f64>, usize)>,
    batch: usize,
    rng: ChaCha8Rng,
    floor: f64,
}

impl<'a> AdaptiveRange<'a> {
    fn new(v: &'a DMatrix<f64>, opts: &RangeFinderOptions) -> Self {
        let max_rank = v.nrows().min(v.ncols());
        let mut s = Self {
            v,
            q: DMatrix::zeros(v.nrows(), max_rank),
            k: 0,
            window: VecDeque::with_capacity(opts.probes),
            pending: VecDeque::new(),
            batch: opts.probes.max(1),
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
            floor: 0.0,
        };
        for _ in 0..opts.probes.max(1) {
            let y = s.probe();
            s.window.push_back(y);
        }
        let scale = s.window.iter().map(|y| y.norm()).fold(0.0, f64::max);
        s.floor = ROUNDOFF * scale;
        s
    }

    fn max_rank(&self) -> usize {
        self.q.ncols()
    }

    /// (I − QQᵀ) V ω for a fresh Gaussian ω.
    fn probe(&mut self) -> DVector<f64> {
        if self.pending.is_empty() {
            let n = self.v.ncols();
            let omega = DMatrix::from_fn(n, self.batch, |_, _| StandardNormal.sample(&mut self.rng));
            let mut y = self.v * omega;
            if self.k > 0 {
                let q = self.q.columns(0, self.k);
                let c = q.transpose() * &y;
                y.gemm(-1.0, &q, &c, 1.0);
            }
            let k = self.k;
            self.pending.extend(y.column_iter().map(|c| (c.into_owned(), k)));
        }
        let (mut y, done) = self.pending.pop_front().unwrap();
        self.orthogonalize_from(&mut y, done);
        y
    }

    /// Removes the components along basis columns `from..k`.
    fn orthogonalize_from(&self, y: &mut DVector<f64>, from: usize) {
        if self.k <= from {
            return;
        }
        let q = self.q.columns(from, self.k - from);
        let c = q.tr_mul(y);
        y.gemv(-1.0, &q, &c, 1.0);
    }

    fn orthogonalize(&self, y: &mut DVector<f64>) {
        self.orthogonalize_from(y, 0);
    }

    fn window_max(&self) -> f64 {
        self.window.iter().map(|y| y.norm()).fold(0.0, f64::max)
    }

    /// Grows the basis until the window maximum drops below `threshold`;
    /// returns false if the basis filled up first.
    fn grow_until(&mut self, threshold: f64) -> bool {
        self.grow(threshold, usize::MAX)
    }

    /// As `grow_until`, stopping early once the basis has `max_cols` columns.
    fn grow(&mut self, threshold: f64, max_cols: usize) -> bool {
        let threshold = threshold.max(self.floor);
        while self.window_max() >= threshold {
            if self.k >= self.max_rank().min(max_cols) {
                return false;
            }
            let mut y = self.window.pop_front().unwrap();
            // repeated Gram–Schmidt pass against drift
            self.orthogonalize(&mut y);
            let norm = y.norm();
            if norm > self.floor {
                let q = y / norm;
                for w in self.window.iter_mut() {
                    let c = q.dot(w);
                    w.axpy(-c, &q, 1.0);
                }
                self.q.set_column(self.k, &q);
                self.k += 1;
            }
            let fresh = self.probe();
            self.window.push_back(fresh);
        }
        true
    }

    fn basis(&self) -> DMatrix<f64> {
        self.q.columns(0, self.k).into_owned()
    }

    fn residual_bound(&self) -> f64 {
        BOUND_FACTOR * self.window_max()
    }
}

/// Adaptive randomized range finder with a rolling probe window.
pub fn range_finder(v: &DMatrix<f64>, eps: f64, opts: &RangeFinderOptions) -> Result<RangeBasis> {
    if !(eps >= 0.0) || opts.probes == 0 {
        return Err(Error::Validation("need eps ≥ 0 and at least one probe".into()));
    }
    let mut ar = AdaptiveRange::new(v, opts);
    let met = ar.grow_until(eps / BOUND_FACTOR);
    if !met {
        log::warn!(
            "range finder reached full rank {} before tolerance {eps:e}",
            ar.max_rank()
        );
    }
    Ok(RangeBasis {
        g: ar.basis(),
        residual_bound: ar.residual_bound(),
        full_rank: !met,
    })
}

/// Randomized SVD: range basis G, then the compact SVD of GᵀV lifted by G.
pub fn randomized_svd(v: &DMatrix<f64>, target: SvdTarget, opts: &RangeFinderOptions) -> Result<SvdFactors> {
    let mut ar = AdaptiveRange::new(v, opts);
    let keep = match target {
        SvdTarget::Tolerance(eps) => {
            if !(eps >= 0.0) {
                return Err(Error::Validation(format!("tolerance must be ≥ 0, got {eps}")));
            }
            if !ar.grow_until(eps / BOUND_FACTOR) {
                log::warn!("randomized SVD reached full rank before tolerance {eps:e}");
            }
            None
        }
        SvdTarget::Rank(k) => {
            if k == 0 || k > ar.max_rank() {
                return Err(Error::RankDeficient {
                    requested: k,
                    available: ar.max_rank(),
                });
            }
            // first pass: k columns plus a window's worth of oversampling
            ar.grow(0.0, k + opts.probes);
            let sigma = projected_singular_values(v, &ar.basis());
            if let Some(&sk) = sigma.get(k - 1) {
                ar.grow_until(RANK_RESIDUAL * sk / BOUND_FACTOR);
            }
            Some(k)
        }
    };
    let g = ar.basis();
    let mut f = compact_svd(v, &g);
    f.residual_bound = ar.residual_bound();
    if let Some(k) = keep {
        if f.rank() < k {
            return Err(Error::RankDeficient {
                requested: k,
                available: f.rank(),
            });
        }
        f = truncate(f, k);
    }
    Ok(f)
}

fn projected_singular_values(v: &DMatrix<f64>, g: &DMatrix<f64>) -> Vec<f64> {
    if g.ncols() == 0 {
        return vec![];
    }
    let b = g.transpose() * v;
    let mut s: Vec<f64> = b.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// SVD of GᵀV, lifted: Φ = G·Φ̃. Modes at round-off level are dropped.
fn compact_svd(v: &DMatrix<f64>, g: &DMatrix<f64>) -> SvdFactors {
    let (m, n) = v.shape();
    if g.ncols() == 0 {
        return SvdFactors {
            phi: DMatrix::zeros(m, 0),
            sigma: vec![],
            psi: DMatrix::zeros(n, 0),
            residual_bound: 0.0,
        };
    }
    // Bᵀ = Q_b R and R = U_r Σ V_rᵀ give B = V_r Σ (Q_b U_r)ᵀ; the small
    // square SVD is much cheaper than one of the wide B
    // explicit transpose so the product goes through the blocked kernel
    let bt = v.transpose() * g;
    let (u, vt, svd) = if bt.nrows() >= bt.ncols() {
        let qr = bt.qr();
        let svd = qr.r().svd(true, true);
        let u = svd.v_t.as_ref().expect("requested Vᵀ").transpose();
        let vt = (qr.q() * svd.u.as_ref().expect("requested U")).transpose();
        (u, vt, svd)
    } else {
        let svd = bt.transpose().svd(true, true);
        (svd.u.clone().expect("requested U"), svd.v_t.clone().expect("requested Vᵀ"), svd)
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| svd.singular_values[i] > top * 1e-14 && svd.singular_values[i] > 0.0)
        .collect();
    let phi_t = DMatrix::from_columns(&kept.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>());
    let psi = DMatrix::from_columns(&kept.iter().map(|&i| vt.row(i).transpose()).collect::<Vec<_>>());
    let sigma = kept.iter().map(|&i| svd.singular_values[i]).collect();
    if kept.is_empty() {
        return SvdFactors {
            phi: DMatrix::zeros(m, 0),
            sigma,
            psi: DMatrix::zeros(n, 0),
            residual_bound: 0.0,
        };
    }
    SvdFactors {
        phi: g * phi_t,
        sigma,
        psi,
        residual_bound: 0.0,
    }
}

fn truncate(f: SvdFactors, k: usize) -> SvdFactors {
    SvdFactors {
        phi: f.phi.columns(0, k).into_owned(),
        sigma: f.sigma[..k].to_vec(),
        psi: f.psi.columns(0, k).into_owned(),
        residual_bound: f.residual_bound,
    }
}

/// Dense thin SVD with nonincreasing singular values, for comparison runs.
pub fn dense_svd(v: &DMatrix<f64>) -> SvdFactors {
    let svd = v.clone().svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    SvdFactors {
        phi: DMatrix::from_columns(&order.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>()),
        sigma: order.iter().map(|&i| svd.singular_values[i]).collect(),
        psi: DMatrix::from_columns(&order.iter().map(|&i| vt.row(i).transpose()).collect::<Vec<_>>()),
        residual_bound: 0.0,
    }
}
