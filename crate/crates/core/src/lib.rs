//! Reduced-order valuation of interest-rate instruments under the two-factor
//! Hull-White model, with a quantified error budget.
//!
//! The pipeline calibrates one parameter group per simulated yield curve,
//! discretizes the pricing PDE with linear finite elements, builds a POD basis
//! from greedily chosen training scenarios and values every scenario with the
//! reduced model. Discretization, projection, reduced-model and sampling errors
//! are estimated along the way and ranked with Sobol indices.

pub mod error;
pub mod greedy_sampling;
pub mod grid_control;
pub mod hull_white_fem;
pub mod market_data;
pub mod pod_core;
pub mod rand_svd;
pub mod risk_pipeline;
pub mod sensitivity;

pub use error::{Error, Result};
