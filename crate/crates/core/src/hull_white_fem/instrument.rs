use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::market_data::ParameterGroup;
use crate::{Error, Result};

const DATE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedCoupon {
    pub t: f64,
    pub rate: f64,
}

/// Capped and floored CMS spread coupons paid annually from `start_year`
/// to maturity, fixed at the payment date.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloatingLeg {
    pub cap: f64,
    pub floor: f64,
    pub tenor_a: f64,
    pub tenor_b: f64,
    pub start_year: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PutDate {
    pub t: f64,
    pub strike: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instrument {
    pub maturity: f64,
    pub nominal: f64,
    #[serde(default)]
    pub fixed_coupons: Vec<FixedCoupon>,
    #[serde(default)]
    pub floating: Option<FloatingLeg>,
    #[serde(default)]
    pub puts: Vec<PutDate>,
}

/// Coupon rate of the spread leg: min(cap, max(floor, cms_a − cms_b)).
pub fn coupon_rate(cms_a: f64, cms_b: f64, cap: f64, floor: f64) -> f64 {
    cap.min(floor.max(cms_a - cms_b))
}

/// Payoff of the holder's put: (strike − value)⁺.
pub fn put_payoff(strike: f64, value: f64) -> f64 {
    (strike - value).max(0.0)
}

fn same_date(a: f64, b: f64) -> bool {
    (a - b).abs() < DATE_EPS
}

impl Instrument {
    /// Ten-year steepener: 4% fixed in years 1–3, CMS10 − CMS2 capped at 3% and
    /// floored at 0% in years 4–10, annual puts at par in years 1–9.
    pub fn steepener() -> Self {
        Self {
            maturity: 10.0,
            nominal: 1.0,
            fixed_coupons: (1..=3)
                .map(|y| FixedCoupon {
                    t: y as f64,
                    rate: 0.04,
                })
                .collect(),
            floating: Some(FloatingLeg {
                cap: 0.03,
                floor: 0.0,
                tenor_a: 10.0,
                tenor_b: 2.0,
                start_year: 4.0,
            }),
            puts: (1..=9)
                .map(|y| PutDate {
                    t: y as f64,
                    strike: 1.0,
                })
                .collect(),
        }
    }

    /// Plain zero-coupon bond.
    pub fn zero_bond(maturity: f64, nominal: f64) -> Self {
        Self {
            maturity,
            nominal,
            fixed_coupons: vec![],
            floating: None,
            puts: vec![],
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let inst: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.maturity > 0.0) || !self.maturity.is_finite() {
            return Err(Error::Validation("maturity must be positive".into()));
        }
        let in_life = |t: f64| t > DATE_EPS && t <= self.maturity + DATE_EPS;
        if let Some(c) = self.fixed_coupons.iter().find(|c| !in_life(c.t)) {
            return Err(Error::Schedule(format!("coupon date {} outside (0, T]", c.t)));
        }
        if let Some(p) = self.puts.iter().find(|p| !in_life(p.t)) {
            return Err(Error::Schedule(format!("put date {} outside (0, T]", p.t)));
        }
        if let Some(f) = &self.floating {
            if f.cap < f.floor {
                return Err(Error::Validation("cap below floor".into()));
            }
            if !(f.tenor_a > 0.0 && f.tenor_b > 0.0) {
                return Err(Error::Validation("CMS tenors must be positive".into()));
            }
            if !in_life(f.start_year) {
                return Err(Error::Schedule(format!(
                    "floating start {} outside (0, T]",
                    f.start_year
                )));
            }
        }
        Ok(())
    }

    pub fn floating_dates(&self) -> Vec<f64> {
        let Some(f) = &self.floating else {
            return vec![];
        };
        let mut dates = Vec::new();
        let mut t = f.start_year;
        while t <= self.maturity + DATE_EPS {
            dates.push(t);
            t += 1.0;
        }
        dates
    }

    /// Sorted distinct coupon payment dates of both legs.
    pub fn coupon_dates(&self) -> Vec<f64> {
        let mut d: Vec<f64> = self.fixed_coupons.iter().map(|c| c.t).collect();
        d.extend(self.floating_dates());
        sort_dedup(d)
    }

    /// Coupon dates, put dates and maturity, sorted and distinct.
    pub fn key_dates(&self) -> Vec<f64> {
        let mut d = self.coupon_dates();
        d.extend(self.puts.iter().map(|p| p.t));
        d.push(self.maturity);
        sort_dedup(d)
    }

    /// Year fraction accrued by the coupon paid at `t`.
    pub fn accrual(&self, t: f64) -> f64 {
        let prev = self
            .coupon_dates()
            .into_iter()
            .filter(|&d| d < t - DATE_EPS)
            .fold(0.0, f64::max);
        t - prev
    }

    pub fn put_strike_at(&self, t: f64) -> Option<f64> {
        self.puts.iter().find(|p| same_date(p.t, t)).map(|p| p.strike)
    }

    pub fn has_event_at(&self, t: f64) -> bool {
        self.key_dates().iter().any(|&d| same_date(d, t))
    }

    /// Nodewise coupon cash flow paid at `t`, if any coupon falls on `t`.
    pub fn cashflow(
        &self,
        rho: &ParameterGroup,
        t: f64,
        nodes: &[[f64; 2]],
        rates: &dyn ReferenceRates,
    ) -> Option<Vec<f64>> {
        let fixed: f64 = self
            .fixed_coupons
            .iter()
            .filter(|c| same_date(c.t, t))
            .map(|c| c.rate)
            .sum();
        let floating = self
            .floating
            .as_ref()
            .filter(|_| self.floating_dates().iter().any(|&d| same_date(d, t)));
        let has_fixed = self.fixed_coupons.iter().any(|c| same_date(c.t, t));
        if !has_fixed && floating.is_none() {
            return None;
        }
        let scale = self.nominal * self.accrual(t);
        let mut flow = vec![fixed * scale; nodes.len()];
        if let Some(leg) = floating {
            let cms = rates.rates_on_nodes(rho, t, leg, nodes);
            for (f, (a, b)) in flow.iter_mut().zip(cms) {
                *f += coupon_rate(a, b, leg.cap, leg.floor) * scale;
            }
        }
        Some(flow)
    }
}

fn sort_dedup(mut d: Vec<f64>) -> Vec<f64> {
    d.sort_by(|a, b| a.total_cmp(b));
    d.dedup_by(|a, b| same_date(*a, *b));
    d
}

/// Source of the two CMS rates of the floating leg at every mesh node.
pub trait ReferenceRates: Send + Sync {
    fn rates_on_nodes(
        &self,
        rho: &ParameterGroup,
        t: f64,
        leg: &FloatingLeg,
        nodes: &[[f64; 2]],
    ) -> Vec<(f64, f64)>;
}

/// Par swap rates from the model's own zero-coupon bonds,
/// (1 − P(t, t+a)) / Σ δ P(t, t_i) with an annual fixed leg.
#[derive(Debug, Clone, Copy, Default)]
pub struct AffineCms;

struct SwapLeg {
    delta: f64,
    offsets: Vec<f64>,
    load_r: Vec<f64>,
    load_u: Vec<f64>,
}

impl SwapLeg {
    fn new(rho: &ParameterGroup, t: f64, tenor: f64) -> Self {
        let model = rho.model();
        let n = (tenor - 1e-9).ceil().max(1.0) as usize;
        let delta = tenor / n as f64;
        let mut leg = Self {
            delta,
            offsets: Vec::with_capacity(n),
            load_r: Vec::with_capacity(n),
            load_u: Vec::with_capacity(n),
        };
        for i in 1..=n {
            let tau = delta * i as f64;
            leg.offsets.push(model.bond_offset(&rho.theta, t, t + tau));
            leg.load_r.push(model.b_alpha(tau));
            leg.load_u.push(model.c_u(tau));
        }
        leg
    }

    fn rate(&self, r: f64, u: f64) -> f64 {
        let mut annuity = 0.0;
        let mut last = 0.0;
        for k in 0..self.offsets.len() {
            last = (self.offsets[k] - r * self.load_r[k] - u * self.load_u[k]).exp();
            annuity += self.delta * last;
        }
        (1.0 - last) / annuity
    }
}

impl ReferenceRates for AffineCms {
    fn rates_on_nodes(
        &self,
        rho: &ParameterGroup,
        t: f64,
        leg: &FloatingLeg,
        nodes: &[[f64; 2]],
    ) -> Vec<(f64, f64)> {
        let a = SwapLeg::new(rho, t, leg.tenor_a);
        let b = SwapLeg::new(rho, t, leg.tenor_b);
        nodes.iter().map(|p| (a.rate(p[0], p[1]), b.rate(p[0], p[1]))).collect()
    }
}

/// CMS rate of the affine model at one state, for tests and reporting.
pub fn affine_swap_rate(rho: &ParameterGroup, t: f64, tenor: f64, r: f64, u: f64) -> f64 {
    SwapLeg::new(rho, t, tenor).rate(r, u)
}
