use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Total simulation error as the sum of its four estimated parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub eps_h: f64,
    pub eps_pod: f64,
    pub eps_rm: f64,
    pub eps_samp: f64,
    pub eps_total: f64,
    pub e_tol_h: f64,
    pub e_tol_d: f64,
    pub e_tol_samp: f64,
    pub e_tol: f64,
}

impl ErrorBudget {
    pub fn new(eps_h: f64, eps_pod: f64, eps_rm: f64, eps_samp: f64, tolerances: [f64; 4]) -> Result<Self> {
        for (name, x) in [("eps_h", eps_h), ("eps_pod", eps_pod), ("eps_rm", eps_rm), ("eps_samp", eps_samp)] {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(Error::Validation(format!("{name} must be finite and nonnegative, got {x}")));
            }
        }
        let [e_tol_h, e_tol_d, e_tol_samp, e_tol] = tolerances;
        Ok(Self {
            eps_h,
            eps_pod,
            eps_rm,
            eps_samp,
            eps_total: eps_h + eps_pod + eps_rm + eps_samp,
            e_tol_h,
            e_tol_d,
            e_tol_samp,
            e_tol,
        })
    }

    pub fn converged(&self) -> bool {
        self.eps_total < self.e_tol
    }

    /// |ε_T − Σ parts|.
    pub fn additivity_gap(&self) -> f64 {
        (self.eps_total - (self.eps_h + self.eps_pod + self.eps_rm + self.eps_samp)).abs()
    }
}
