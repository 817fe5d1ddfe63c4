//! Yield-curve scenario sets and the calibrated parameter space.
//!
//! Curves are stored as continuously compounded zero rates on a shared tenor
//! grid. Each curve is turned into one parameter group by fitting the
//! piecewise-constant drift θ(t) of the two-factor Hull-White model so that
//! model zero-coupon bond prices reproduce the curve's discount factors.

mod calibrate;
mod curves;
mod hw2f;
mod simulate;

pub use calibrate::{
    build_parameter_space, calibrate_theta, read_parameter_space, write_parameter_space,
    ModelConstants, ParameterGroup, ParameterSpace,
};
pub use curves::{
    load_yield_curves, parse_tenor, standard_tenors, synthetic_history, CurveFormat,
    YieldCurveSet,
};
pub use hw2f::{HullWhite2F, PiecewiseTheta};
pub use simulate::{simulate_yield_curves, simulate_yield_curves_with, BootstrapConfig, MIN_SHIFTED_RATE};
