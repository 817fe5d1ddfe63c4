//! Finite-element full model of the two-factor Hull-White pricing PDE.
//!
//! Linear triangles on a structured (r, u) mesh, fully implicit Euler in time,
//! solved backward from maturity with coupon and put updates at key dates.
//! The operator is split into scenario-independent pieces so that a reduced
//! model can project each piece once.

mod assemble;
mod instrument;
mod mesh;
mod solve;
pub mod sparse;

pub use assemble::{coefficients, BoundaryCondition, OperatorSet, N_PARTS};
pub use instrument::{
    affine_swap_rate, coupon_rate, put_payoff, AffineCms, FixedCoupon, FloatingLeg, Instrument,
    PutDate, ReferenceRates,
};
pub use mesh::{build_mesh, build_mesh_cells, h_for_nodes, BoundaryEdge, Bounds, Mesh};
pub use solve::{FullModel, FullSolution, TimeGrid, ValueSurface};

use crate::market_data::ParameterSpace;
use crate::Result;

/// Default truncated domain: ±`n_sd` stationary standard deviations of each
/// factor, centred on the mean spot rate of the space in r and on 0 in u.
pub fn default_bounds(space: &ParameterSpace, n_sd: f64) -> Result<Bounds> {
    let g = &space.groups[0];
    let (sd_r, sd_u) = g.model().stationary_std();
    Bounds::stationary(space.mean_spot(), sd_r, sd_u, n_sd)
}
