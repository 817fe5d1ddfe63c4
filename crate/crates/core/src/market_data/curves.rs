use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A set of zero curves on one tenor grid, one curve per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YieldCurveSet {
    /// Tenors in years, strictly increasing and positive.
    pub tenors: Vec<f64>,
    /// Continuously compounded zero rates, `rates[row][tenor]`.
    pub rates: Vec<Vec<f64>>,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveFormat {
    Csv,
    Json,
}

impl YieldCurveSet {
    pub fn new(tenors: Vec<f64>, rates: Vec<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        let set = Self {
            tenors,
            rates,
            label: label.into(),
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.tenors.len();
        if m < 2 {
            return Err(Error::Validation(format!("need at least 2 tenors, got {m}")));
        }
        for (j, w) in self.tenors.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::Validation(format!(
                    "tenors not strictly increasing at column {}",
                    j + 2
                )));
            }
        }
        if !(self.tenors[0] > 0.0) || !self.tenors.iter().all(|t| t.is_finite()) {
            return Err(Error::Validation("tenors must be finite and positive".into()));
        }
        for (i, row) in self.rates.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: row.len(),
                });
            }
            if let Some(j) = row.iter().position(|r| !r.is_finite()) {
                return Err(Error::Parse {
                    row: i + 1,
                    column: j + 2,
                    message: format!("non-finite rate {}", row[j]),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn m(&self) -> usize {
        self.tenors.len()
    }

    /// Zero rate of `row` at `t`, linear in the rate between tenors and flat outside.
    pub fn zero_rate(&self, row: usize, t: f64) -> f64 {
        interp_flat(&self.tenors, &self.rates[row], t)
    }

    pub fn discount_factor(&self, row: usize, t: f64) -> f64 {
        (-self.zero_rate(row, t) * t).exp()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["tenor_years".to_string()];
        header.extend(self.tenors.iter().map(|t| format!("{t}")));
        w.write_record(&header)?;
        for (i, row) in self.rates.iter().enumerate() {
            let mut rec = vec![format!("{i}")];
            rec.extend(row.iter().map(|r| format!("{r:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn interp_flat(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let k = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let w = (x - x0) / (x1 - x0);
    ys[k - 1] * (1.0 - w) + ys[k] * w
}

/// Parses a tenor written either as a year fraction (`2.5`) or as a label
/// such as `1D`, `3M`, `2W` or `10Y`.
pub fn parse_tenor(s: &str) -> Option<f64> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    if s.len() < 2 {
        return None;
    }
    let (num, unit) = s.split_at(s.len() - 1);
    let n: f64 = num.parse().ok()?;
    let scale = match unit.to_ascii_uppercase().as_str() {
        "D" => 1.0 / 365.0,
        "W" => 7.0 / 365.0,
        "M" => 1.0 / 12.0,
        "Y" => 1.0,
        _ => return None,
    };
    Some(n * scale)
}

/// The 21-point grid 1D, 1M, 3M, 6M, 1Y..10Y, 12Y, 15Y, 20Y, 25Y, 30Y, 40Y, 50Y.
pub fn standard_tenors() -> Vec<f64> {
    let labels = [
        "1D", "1M", "3M", "6M", "1Y", "2Y", "3Y", "4Y", "5Y", "6Y", "7Y", "8Y", "9Y", "10Y",
        "12Y", "15Y", "20Y", "25Y", "30Y", "40Y", "50Y",
    ];
    labels.iter().map(|l| parse_tenor(l).unwrap()).collect()
}

pub fn load_yield_curves(path: &Path, format: CurveFormat) -> Result<YieldCurveSet> {
    match format {
        CurveFormat::Json => {
            let text = std::fs::read_to_string(path)?;
            let set: YieldCurveSet = serde_json::from_str(&text)?;
            set.validate()?;
            Ok(set)
        }
        CurveFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(false)
                .trim(csv::Trim::All)
                .flexible(true)
                .from_path(path)?;
            let mut records = rdr.records();
            let header = records
                .next()
                .ok_or_else(|| Error::Validation("empty curve file".into()))??;
            let mut tenors = Vec::with_capacity(header.len().saturating_sub(1));
            for (j, cell) in header.iter().enumerate().skip(1) {
                let t = parse_tenor(cell).ok_or_else(|| Error::Parse {
                    row: 0,
                    column: j + 1,
                    message: format!("bad tenor '{cell}'"),
                })?;
                tenors.push(t);
            }
            let m = tenors.len();
            let mut rates = Vec::new();
            for (i, rec) in records.enumerate() {
                let rec = rec?;
                let row = i + 1;
                if rec.len() != m + 1 {
                    return Err(Error::Parse {
                        row,
                        column: rec.len().min(m + 1),
                        message: format!("expected {} rates, found {}", m, rec.len().saturating_sub(1)),
                    });
                }
                let mut vals = Vec::with_capacity(m);
                for (j, cell) in rec.iter().enumerate().skip(1) {
                    let v: f64 = cell.parse().map_err(|_| Error::Parse {
                        row,
                        column: j + 1,
                        message: format!("bad rate '{cell}'"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            row,
                            column: j + 1,
                            message: format!("non-finite rate '{cell}'"),
                        });
                    }
                    vals.push(v);
                }
                rates.push(vals);
            }
            let label = path.display().to_string();
            YieldCurveSet::new(tenors, rates, label)
        }
    }
}

/// Synthetic daily history driven by three Nelson-Siegel factors following
/// mean-reverting Gaussian dynamics, plus small per-tenor noise.
///
/// Stands in for proprietary market history; the level stays well above zero
/// for the default calibration.
pub fn synthetic_history(tenors: &[f64], n_obs: usize, seed: u64) -> Result<YieldCurveSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lambda = 2.0;
    let (mu, kappa, vol) = (
        [0.032, -0.018, 0.006],
        [0.003, 0.004, 0.006],
        [0.00035, 0.00040, 0.00060],
    );
    let noise = 0.000003;
    let mut f = mu;
    let mut rates = Vec::with_capacity(n_obs);
    for _ in 0..n_obs {
        for k in 0..3 {
            let z: f64 = StandardNormal.sample(&mut rng);
            f[k] += kappa[k] * (mu[k] - f[k]) + vol[k] * z;
        }
        let row: Vec<f64> = tenors
            .iter()
            .map(|&t| {
                let x = t / lambda;
                let l1 = (1.0 - (-x).exp()) / x;
                let l2 = l1 - (-x).exp();
                let z: f64 = StandardNormal.sample(&mut rng);
                f[0] + f[1] * l1 + f[2] * l2 + noise * z
            })
            .collect();
        rates.push(row);
    }
    YieldCurveSet::new(tenors.to_vec(), rates, format!("synthetic(n={n_obs}, seed={seed})"))
}
