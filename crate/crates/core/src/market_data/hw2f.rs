use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Piecewise-constant θ(t): value `values[i]` on `(breaks[i-1], breaks[i]]`
/// with `breaks[-1] = 0`, extended flat beyond the last break.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseTheta {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl PiecewiseTheta {
    pub fn constant(breaks: Vec<f64>, value: f64) -> Self {
        let values = vec![value; breaks.len()];
        Self { breaks, values }
    }

    pub fn segment_of(&self, t: f64) -> usize {
        let k = self.breaks.partition_point(|&b| b < t);
        k.min(self.values.len() - 1)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.segment_of(t)]
    }

    /// Start and end of segment `k`; the last segment is open to the right.
    fn segment_bounds(&self, k: usize) -> (f64, f64) {
        let lo = if k == 0 { 0.0 } else { self.breaks[k - 1] };
        let hi = if k + 1 == self.values.len() {
            f64::INFINITY
        } else {
            self.breaks[k]
        };
        (lo, hi)
    }
}

/// Constant-coefficient part of the two-factor Hull-White model
/// `dr = (θ(t) + u − αr)dt + σ₁dW₁`, `du = −bu dt + σ₂dW₂`, `dW₁dW₂ = γdt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullWhite2F {
    pub alpha: f64,
    pub b: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub gamma: f64,
}

impl HullWhite2F {
    pub fn new(alpha: f64, b: f64, sigma1: f64, sigma2: f64, gamma: f64) -> Result<Self> {
        let m = Self {
            alpha,
            b,
            sigma1,
            sigma2,
            gamma,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("alpha", self.alpha),
            ("b", self.b),
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(-1.0..=1.0).contains(&self.gamma) {
            return Err(Error::Validation(format!(
                "gamma must lie in [-1, 1], got {}",
                self.gamma
            )));
        }
        if (self.alpha - self.b).abs() < 1e-8 {
            return Err(Error::Validation("alpha and b must differ".into()));
        }
        Ok(())
    }

    /// ∫₀^τ e^{−αs} ds.
    pub fn b_alpha(&self, tau: f64) -> f64 {
        exp_integral(self.alpha, tau)
    }

    /// Loading of the bond exponent on u.
    pub fn c_u(&self, tau: f64) -> f64 {
        (exp_integral(self.b, tau) - exp_integral(self.alpha, tau)) / (self.alpha - self.b)
    }

    /// Variance of ∫ r over a horizon τ given the state at its start.
    pub fn integrated_variance(&self, tau: f64) -> f64 {
        let (a, b) = (self.alpha, self.b);
        let s3 = self.sigma2 / (a - b);
        let sx2 = self.sigma1 * self.sigma1 + s3 * s3 - 2.0 * self.gamma * self.sigma1 * s3;
        let cross = self.gamma * self.sigma1 * s3 - s3 * s3;
        let g = |k: f64| {
            // τ − 2B_k(τ) + B_{2k}(τ), written to stay accurate for small τ
            (tau - exp_integral(k, tau)) - (exp_integral(k, tau) - exp_integral(2.0 * k, tau))
        };
        let h = tau - exp_integral(a, tau) - exp_integral(b, tau) + exp_integral(a + b, tau);
        sx2 / (a * a) * g(a) + s3 * s3 / (b * b) * g(b) + 2.0 * cross / (a * b) * h
    }

    /// Stationary standard deviations of (r, u).
    pub fn stationary_std(&self) -> (f64, f64) {
        let (a, b) = (self.alpha, self.b);
        let p22 = self.sigma2 * self.sigma2 / (2.0 * b);
        let p12 = (p22 + self.gamma * self.sigma1 * self.sigma2) / (a + b);
        let p11 = (self.sigma1 * self.sigma1 + 2.0 * p12) / (2.0 * a);
        (p11.max(0.0).sqrt(), p22.sqrt())
    }

    /// ∫_t^T θ(v) B_α(T − v) dv.
    pub fn theta_integral(&self, theta: &PiecewiseTheta, t: f64, maturity: f64) -> f64 {
        if maturity <= t {
            return 0.0;
        }
        let a = self.alpha;
        let mut acc = 0.0;
        let k0 = theta.segment_of(t.max(0.0));
        for k in k0..theta.values.len() {
            let (lo, hi) = theta.segment_bounds(k);
            let s0 = lo.max(t);
            let s1 = hi.min(maturity);
            if s1 <= s0 {
                if lo >= maturity {
                    break;
                }
                continue;
            }
            // ∫_{s0}^{s1} (1 − e^{−α(T−v)})/α dv
            let len = s1 - s0;
            let tail = (-a * (maturity - s1)).exp() * exp_integral(a, len);
            acc += theta.values[k] * (len - tail) / a;
            if hi >= maturity {
                break;
            }
        }
        acc
    }

    /// Zero-coupon bond price P(t, T) in state (r, u).
    pub fn zero_bond(&self, theta: &PiecewiseTheta, t: f64, maturity: f64, r: f64, u: f64) -> f64 {
        let tau = maturity - t;
        (-r * self.b_alpha(tau) - u * self.c_u(tau) - self.theta_integral(theta, t, maturity)
            + 0.5 * self.integrated_variance(tau))
        .exp()
    }

    /// Deterministic part of the bond exponent, shared by every state at time t.
    pub fn bond_offset(&self, theta: &PiecewiseTheta, t: f64, maturity: f64) -> f64 {
        -self.theta_integral(theta, t, maturity) + 0.5 * self.integrated_variance(maturity - t)
    }
}

/// ∫₀^τ e^{−ks} ds = (1 − e^{−kτ})/k, accurate for small kτ.
pub(crate) fn exp_integral(k: f64, tau: f64) -> f64 {
    let x = k * tau;
    if x.abs() < 1e-5 {
        tau * (1.0 - x / 2.0 + x * x / 6.0)
    } else {
        -(-x).exp_m1() / k
    }
}
