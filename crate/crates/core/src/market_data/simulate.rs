use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::curves::YieldCurveSet;
use crate::{Error, Result};

/// Floor of the automatic shift. Log returns of rates near zero explode when
/// summed over multi-year horizons.
pub const MIN_SHIFTED_RATE: f64 = 0.02;

/// Settings of the historical log-return bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Daily returns summed per simulated year.
    pub trading_days_per_year: f64,
    /// Shift added to rates before taking logs. `None` picks the smallest
    /// nonnegative shift that lifts every historical rate to at least
    /// [`MIN_SHIFTED_RATE`].
    pub shift: Option<f64>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            trading_days_per_year: 256.0,
            shift: None,
        }
    }
}

/// Bootstraps `s` curves at `horizon` years from historical daily curves.
pub fn simulate_yield_curves(historical: &YieldCurveSet, s: usize, horizon: f64, seed: u64) -> Result<YieldCurveSet> {
    simulate_yield_curves_with(historical, s, horizon, seed, &BootstrapConfig::default())
}

/// Resamples daily (shifted) log-return vectors with replacement, sums them
/// over the horizon and applies the sum to the last observed curve.
pub fn simulate_yield_curves_with(
    historical: &YieldCurveSet,
    s: usize,
    horizon: f64,
    seed: u64,
    config: &BootstrapConfig,
) -> Result<YieldCurveSet> {
    historical.validate()?;
    let n = historical.len();
    if n < 2 {
        return Err(Error::InsufficientHistory(n));
    }
    if s == 0 || !(horizon > 0.0) {
        return Err(Error::Validation("need s ≥ 1 and a positive horizon".into()));
    }
    let min_rate = historical
        .rates
        .iter()
        .flatten()
        .fold(f64::INFINITY, |a, &b| a.min(b));
    let shift = config
        .shift
        .unwrap_or((MIN_SHIFTED_RATE - min_rate).max(0.0));
    if min_rate + shift <= 0.0 {
        return Err(Error::Domain(format!(
            "shift {shift} leaves non-positive shifted rates"
        )));
    }
    let m = historical.m();
    let returns: Vec<Vec<f64>> = historical
        .rates
        .windows(2)
        .map(|w| {
            (0..m)
                .map(|j| ((w[1][j] + shift) / (w[0][j] + shift)).ln())
                .collect()
        })
        .collect();
    let last = &historical.rates[n - 1];
    let days = (horizon * config.trading_days_per_year).round().max(1.0) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rates = Vec::with_capacity(s);
    let mut acc = vec![0.0; m];
    for _ in 0..s {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for _ in 0..days {
            let row = &returns[rng.random_range(0..returns.len())];
            for (a, r) in acc.iter_mut().zip(row) {
                *a += r;
            }
        }
        rates.push(
            last.iter()
                .zip(&acc)
                .map(|(&y, &a)| (y + shift) * a.exp() - shift)
                .collect(),
        );
    }
    YieldCurveSet::new(
        historical.tenors.clone(),
        rates,
        format!(
            "bootstrap(source={}, s={s}, horizon={horizon}, seed={seed})",
            historical.label
        ),
    )
}
