use std::path::Path;

use serde::{Deserialize, Serialize};

use super::curves::YieldCurveSet;
use super::hw2f::{HullWhite2F, PiecewiseTheta};
use crate::{Error, Result};

/// Constants shared by every scenario: α, b, σ₁, σ₂, γ.
pub type ModelConstants = HullWhite2F;

/// Model parameters of one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGroup {
    pub scenario_id: usize,
    pub alpha: f64,
    pub b: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub gamma: f64,
    pub theta: PiecewiseTheta,
    /// Short rate at the first tenor of the source curve.
    pub spot: f64,
}

impl ParameterGroup {
    pub fn model(&self) -> HullWhite2F {
        HullWhite2F {
            alpha: self.alpha,
            b: self.b,
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            gamma: self.gamma,
        }
    }

    pub fn theta_at(&self, t: f64) -> f64 {
        self.theta.value_at(t)
    }

    /// Feature vector used by the surrogate: the θ segment values.
    pub fn features(&self) -> &[f64] {
        &self.theta.values
    }

    pub fn validate(&self) -> Result<()> {
        self.model().validate()?;
        if self.theta.values.len() != self.theta.breaks.len() || self.theta.values.is_empty() {
            return Err(Error::Validation("theta segments must match the tenor grid".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub tenors: Vec<f64>,
    pub groups: Vec<ParameterGroup>,
}

impl ParameterSpace {
    pub fn new(tenors: Vec<f64>, groups: Vec<ParameterGroup>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Validation("parameter space is empty".into()));
        }
        for g in &groups {
            g.validate()?;
            if g.theta.breaks != tenors {
                return Err(Error::Validation(format!(
                    "scenario {} does not share the tenor grid",
                    g.scenario_id
                )));
            }
        }
        Ok(Self { tenors, groups })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn mean_spot(&self) -> f64 {
        self.groups.iter().map(|g| g.spot).sum::<f64>() / self.groups.len() as f64
    }
}

/// Fits θ segment by segment so that model bond prices match the curve's
/// discount factors at every tenor. Each segment is a bracketed root-find on
/// the bond price with tolerance 1e-10.
pub fn calibrate_theta(
    tenors: &[f64],
    zero_rates: &[f64],
    constants: &ModelConstants,
    scenario_id: usize,
) -> Result<ParameterGroup> {
    constants.validate()?;
    if tenors.len() != zero_rates.len() || tenors.len() < 2 {
        return Err(Error::DimensionMismatch {
            expected: tenors.len(),
            got: zero_rates.len(),
        });
    }
    let r0 = zero_rates[0];
    let mut theta = PiecewiseTheta::constant(tenors.to_vec(), 0.0);
    for k in 0..tenors.len() {
        let tk = tenors[k];
        let target = (-zero_rates[k] * tk).exp();
        let fixed = r0 * constants.b_alpha(tk) - 0.5 * constants.integrated_variance(tk);
        let mut trial = theta.clone();
        let mut price = |x: f64| {
            trial.values[k] = x;
            // later segments do not reach tk, so their values are irrelevant here
            (-(fixed + constants.theta_integral(&trial, 0.0, tk))).exp() - target
        };
        let guess = constants.alpha * zero_rates[k];
        let (lo, hi) = bracket(&mut price, guess, 0.05).ok_or_else(|| Error::Calibration {
            segment: k,
            message: "no sign change found while bracketing".into(),
        })?;
        let root = brent(&mut price, lo, hi, 1e-10, 200).ok_or_else(|| Error::Calibration {
            segment: k,
            message: "root-finder did not converge".into(),
        })?;
        theta.values[k] = root;
    }
    Ok(ParameterGroup {
        scenario_id,
        alpha: constants.alpha,
        b: constants.b,
        sigma1: constants.sigma1,
        sigma2: constants.sigma2,
        gamma: constants.gamma,
        theta,
        spot: r0,
    })
}

/// Calibrates every curve of the set into one parameter space.
pub fn build_parameter_space(curves: &YieldCurveSet, constants: &ModelConstants) -> Result<ParameterSpace> {
    use rayon::prelude::*;
    let groups = curves
        .rates
        .par_iter()
        .enumerate()
        .map(|(i, row)| calibrate_theta(&curves.tenors, row, constants, i))
        .collect::<Result<Vec<_>>>()?;
    ParameterSpace::new(curves.tenors.clone(), groups)
}

#[derive(Serialize, Deserialize)]
struct GroupRecord {
    scenario_id: usize,
    alpha: f64,
    b: f64,
    sigma1: f64,
    sigma2: f64,
    gamma: f64,
    theta: Vec<f64>,
    spot: f64,
}

/// Writes the space as a JSON array of scenario records.
pub fn write_parameter_space(space: &ParameterSpace, path: &Path) -> Result<()> {
    let records: Vec<GroupRecord> = space
        .groups
        .iter()
        .map(|g| GroupRecord {
            scenario_id: g.scenario_id,
            alpha: g.alpha,
            b: g.b,
            sigma1: g.sigma1,
            sigma2: g.sigma2,
            gamma: g.gamma,
            theta: g.theta.values.clone(),
            spot: g.spot,
        })
        .collect();
    std::fs::write(path, serde_json::to_string_pretty(&records)?)?;
    Ok(())
}

pub fn read_parameter_space(path: &Path, tenors: &[f64]) -> Result<ParameterSpace> {
    let records: Vec<GroupRecord> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let groups = records
        .into_iter()
        .map(|r| ParameterGroup {
            scenario_id: r.scenario_id,
            alpha: r.alpha,
            b: r.b,
            sigma1: r.sigma1,
            sigma2: r.sigma2,
            gamma: r.gamma,
            theta: PiecewiseTheta {
                breaks: tenors.to_vec(),
                values: r.theta,
            },
            spot: r.spot,
        })
        .collect();
    ParameterSpace::new(tenors.to_vec(), groups)
}

/// Expands a symmetric interval around `guess` until `f` changes sign.
fn bracket(f: &mut impl FnMut(f64) -> f64, guess: f64, width: f64) -> Option<(f64, f64)> {
    let mut w = width;
    for _ in 0..40 {
        let (lo, hi) = (guess - w, guess + w);
        let (flo, fhi) = (f(lo), f(hi));
        if flo.is_finite() && fhi.is_finite() && flo * fhi <= 0.0 {
            return Some((lo, hi));
        }
        w *= 2.0;
    }
    None
}

/// Brent's method; stops once |f(x)| < ftol or the bracket collapses.
fn brent(f: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64, ftol: f64, max_iter: usize) -> Option<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa.abs() < ftol {
        return Some(a);
    }
    if fb.abs() < ftol {
        return Some(b);
    }
    if fa * fb > 0.0 {
        return None;
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut bisected = true;
    for _ in 0..max_iter {
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let out_of_range = !((s > lo.min(b)) && (s < lo.max(b)));
        let slow = if bisected {
            (s - b).abs() >= (b - c).abs() / 2.0
        } else {
            (s - b).abs() >= (c - d).abs() / 2.0
        };
        if out_of_range || slow {
            s = (a + b) / 2.0;
            bisected = true;
        } else {
            bisected = false;
        }
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa * fs < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
        if fb.abs() < ftol || (b - a).abs() < 1e-15 * (1.0 + b.abs()) {
            return Some(b);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cubic_root() {
        let mut f = |x: f64| x * x * x - 2.0;
        let r = brent(&mut f, 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-12);
    }
}
