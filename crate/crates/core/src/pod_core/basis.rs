use nalgebra::DMatrix;

use crate::hull_white_fem::{FullSolution, ValueSurface};
use crate::rand_svd::{randomized_svd, RangeFinderOptions, SvdTarget};
use crate::{Error, Result};

/// Column store of full-model surfaces, one column per stored time step.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    m: usize,
    data: Vec<f64>,
    /// (scenario id, time index) of every column.
    pub sources: Vec<(usize, usize)>,
}

impl SnapshotMatrix {
    pub fn new(m: usize) -> Self {
        Self {
            m,
            data: Vec::new(),
            sources: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.m
    }

    pub fn ncols(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.m, self.ncols(), &self.data)
    }

    pub fn push_column(&mut self, column: &[f64], scenario_id: usize, step: usize) -> Result<()> {
        if column.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: column.len(),
            });
        }
        if let Some(bad) = column.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("snapshot entry {bad} of scenario {scenario_id}")));
        }
        self.data.extend_from_slice(column);
        self.sources.push((scenario_id, step));
        Ok(())
    }

    /// Appends every time step of a full solve.
    pub fn push_solution(&mut self, sol: &FullSolution, scenario_id: usize) -> Result<()> {
        for (n, col) in sol.values.column_iter().enumerate() {
            self.push_column(col.as_slice(), scenario_id, n)?;
        }
        Ok(())
    }

    pub fn scenario_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.sources.iter().map(|s| s.0).collect();
        ids.dedup();
        ids
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

/// Appends a trajectory in time order.
pub fn append_snapshots(mut s: SnapshotMatrix, trajectory: &[ValueSurface], scenario_id: usize) -> Result<SnapshotMatrix> {
    for (n, surf) in trajectory.iter().enumerate() {
        s.push_column(&surf.values, scenario_id, n)?;
    }
    Ok(s)
}

/// Orthonormal POD basis with the spectrum it was cut from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    pub q: DMatrix<f64>,
    /// Every singular value the decomposition resolved, nonincreasing.
    pub sigma: Vec<f64>,
    /// ‖S‖_F² − Σ_{ℓ≤d} σ_ℓ², the squared projection residual of the snapshots.
    pub sigma_discarded_sq_sum: f64,
    pub total_energy: f64,
    pub sources: Vec<(usize, usize)>,
}

impl ReducedBasis {
    pub fn d(&self) -> usize {
        self.q.ncols()
    }

    pub fn m(&self) -> usize {
        self.q.nrows()
    }

    /// Discarded snapshot energy as a fraction of the total.
    pub fn relative_projection_error(&self) -> f64 {
        if self.total_energy > 0.0 {
            self.sigma_discarded_sq_sum / self.total_energy
        } else {
            0.0
        }
    }

    /// Leading `d` modes of this basis.
    pub fn truncated(&self, d: usize) -> Result<Self> {
        if d == 0 || d > self.d() {
            return Err(Error::RankDeficient {
                requested: d,
                available: self.d(),
            });
        }
        let kept: f64 = self.sigma[..d].iter().map(|s| s * s).sum();
        Ok(Self {
            q: self.q.columns(0, d).into_owned(),
            sigma: self.sigma.clone(),
            sigma_discarded_sq_sum: (self.total_energy - kept).max(0.0),
            total_energy: self.total_energy,
            sources: self.sources.clone(),
        })
    }

    /// Identity basis of dimension `m`.
    pub fn identity(m: usize) -> Self {
        Self {
            q: DMatrix::identity(m, m),
            sigma: vec![],
            sigma_discarded_sq_sum: 0.0,
            total_energy: 0.0,
            sources: vec![],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PodTarget {
    Dimension(usize),
    /// Smallest d whose discarded energy fraction is at most this value.
    Energy(f64),
}

/// Σ_{ℓ>d} σ_ℓ².
pub fn projection_error(sigma: &[f64], d: usize) -> f64 {
    sigma.iter().skip(d).map(|s| s * s).sum()
}

/// POD basis of the snapshot columns via randomized SVD.
pub fn pod_basis(s: &SnapshotMatrix, target: PodTarget, opts: &RangeFinderOptions) -> Result<ReducedBasis> {
    if s.is_empty() {
        return Err(Error::Validation("empty snapshot matrix".into()));
    }
    let v = s.matrix();
    let total = s.frobenius_sq();
    let f = match target {
        PodTarget::Dimension(d) => randomized_svd(&v, SvdTarget::Rank(d), opts)?,
        PodTarget::Energy(e) => {
            if !(e >= 0.0) {
                return Err(Error::Validation(format!("energy tolerance must be ≥ 0, got {e}")));
            }
            // unresolved energy is at most tol²·rank, kept well below e·total
            let tol = 0.1 * (e.max(1e-14) * total / v.ncols() as f64).sqrt();
            randomized_svd(&v, SvdTarget::Tolerance(tol), opts)?
        }
    };
    let d = match target {
        PodTarget::Dimension(d) => d,
        PodTarget::Energy(e) => {
            let mut kept = 0.0;
            let mut d = f.rank();
            for (k, sv) in f.sigma.iter().enumerate() {
                kept += sv * sv;
                if (total - kept).max(0.0) <= e * total {
                    d = k + 1;
                    break;
                }
            }
            d.max(1).min(f.rank())
        }
    };
    if d == 0 || d > f.rank() {
        return Err(Error::RankDeficient {
            requested: d,
            available: f.rank(),
        });
    }
    let kept: f64 = f.sigma[..d].iter().map(|s| s * s).sum();
    Ok(ReducedBasis {
        q: f.phi.columns(0, d).into_owned(),
        sigma: f.sigma,
        sigma_discarded_sq_sum: (total - kept).max(0.0),
        total_energy: total,
        sources: s.sources.clone(),
    })
}

/// sqrt(Σ_n ‖V_n − V̄_n‖²) / sqrt(Σ_n ‖V_n‖²) over trajectory columns.
pub fn reduced_model_error(full: &DMatrix<f64>, lifted: &DMatrix<f64>) -> Result<f64> {
    if full.shape() != lifted.shape() {
        return Err(Error::DimensionMismatch {
            expected: full.len(),
            got: lifted.len(),
        });
    }
    let denom = full.norm_squared();
    if denom == 0.0 {
        return Err(Error::RelativeErrorUndefined);
    }
    Ok(((full - lifted).norm_squared() / denom).sqrt())
}
