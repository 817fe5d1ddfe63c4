use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::greedy_sampling::{GreedyConfig, GreedyMode};
use crate::hull_white_fem::BoundaryCondition;
use crate::market_data::{BootstrapConfig, HullWhite2F};
use crate::sensitivity::SensitivityConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Bound on the total relative error ε_T.
    pub e_tol: f64,
    pub e_tol_h: f64,
    /// Absolute temporal error of the spot value.
    pub e_tol_t: f64,
    /// Bound on ε_POD + ε_RM.
    pub e_tol_d: f64,
    pub e_tol_samp: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            e_tol: 1e-3,
            e_tol_h: 2.5e-4,
            e_tol_t: 1e-4,
            e_tol_d: 5e-4,
            e_tol_samp: 2.5e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub mode: GreedyMode,
    #[serde(flatten)]
    pub greedy: GreedyConfig,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            mode: GreedyMode::Adaptive,
            greedy: GreedyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Finest grid of the first study, in nodes (used when `h_init` is unset).
    pub m_init: usize,
    pub h_init: Option<f64>,
    pub g12: f64,
    pub g23: f64,
    pub max_refinements: usize,
    pub p_formal: f64,
    /// Skip grid selection and use this many nodes.
    pub m_fixed: Option<usize>,
    pub dt_max: f64,
    pub k0: usize,
    pub time_step_iterations: usize,
    /// Skip the time-step controller and use this step (snapped to key dates).
    pub dt_fixed: Option<f64>,
    /// Domain half-width in stationary standard deviations.
    pub n_sd: f64,
    pub boundary: BoundaryCondition,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            m_init: 441,
            h_init: None,
            g12: 1.5,
            g23: 1.5,
            max_refinements: 4,
            p_formal: 2.0,
            m_fixed: None,
            dt_max: 0.25,
            k0: 2,
            time_step_iterations: crate::grid_control::DEFAULT_TIME_STEP_ITERATIONS,
            dt_fixed: None,
            n_sd: 6.0,
            boundary: BoundaryCondition::Linearity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    /// Scenario curves to value directly (CSV or JSON by extension).
    pub curves: Option<PathBuf>,
    /// Daily history to bootstrap from; synthetic when unset.
    pub history: Option<PathBuf>,
    pub synthetic_days: usize,
    pub history_seed: u64,
    pub scenarios: usize,
    /// Simulation horizon in years.
    pub horizon: f64,
    pub seed: u64,
    pub bootstrap: BootstrapConfig,
    pub model: HullWhite2F,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            curves: None,
            history: None,
            synthetic_days: 1306,
            history_seed: 1,
            scenarios: 500,
            horizon: 5.0,
            seed: 2,
            bootstrap: BootstrapConfig::default(),
            model: HullWhite2F {
                alpha: 0.75,
                b: 0.04,
                sigma1: 0.0035,
                sigma2: 0.008,
                gamma: 0.65,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub histogram_bins: usize,
    pub confidence: f64,
    /// Holding period of the VEV; the market horizon when unset.
    pub holding_period: Option<f64>,
    /// Discount factor of VaR; from the moderate scenario's curve when unset.
    pub discount_factor: Option<f64>,
    /// Time a dense SVD of the snapshot matrix against the randomized one.
    pub svd_benchmark: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            histogram_bins: 30,
            confidence: 0.975,
            holding_period: None,
            discount_factor: None,
            svd_benchmark: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub tolerances: Tolerances,
    pub sampling: SamplingConfig,
    pub grid: GridConfig,
    pub market: MarketConfig,
    /// Instrument JSON; the ten-year steepener when unset.
    pub instrument: Option<PathBuf>,
    pub output: PathBuf,
    pub report: ReportConfig,
    /// Sobol ranking of the error parts; skipped when unset.
    pub sensitivity: Option<SensitivityConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            sampling: SamplingConfig::default(),
            grid: GridConfig::default(),
            market: MarketConfig::default(),
            instrument: None,
            output: PathBuf::from("morrisk-out"),
            report: ReportConfig::default(),
            sensitivity: None,
        }
    }
}

impl PipelineConfig {
    /// Reads TOML, or JSON when the extension is `.json`. Relative input
    /// paths are resolved against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        };
        if let Some(dir) = path.parent() {
            let fix = |p: &mut Option<PathBuf>| {
                if let Some(q) = p.as_mut() {
                    if q.is_relative() {
                        *q = dir.join(&*q);
                    }
                }
            };
            fix(&mut cfg.market.curves);
            fix(&mut cfg.market.history);
            fix(&mut cfg.instrument);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        for (name, x) in [
            ("e_tol", t.e_tol),
            ("e_tol_h", t.e_tol_h),
            ("e_tol_t", t.e_tol_t),
            ("e_tol_d", t.e_tol_d),
            ("e_tol_samp", t.e_tol_samp),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        let parts = t.e_tol_h + t.e_tol_d + t.e_tol_samp;
        if parts > t.e_tol * (1.0 + 1e-12) {
            log::warn!("component tolerances sum to {parts:e}, above e_tol = {:e}", t.e_tol);
        }
        let g = &self.grid;
        if !(g.g12 > 1.3 && g.g23 > 1.3) {
            return Err(Error::Config("refinement ratios must exceed 1.3".into()));
        }
        if !(g.dt_max > 0.0) || g.k0 < 2 || g.max_refinements == 0 || !(g.n_sd > 0.0) {
            return Err(Error::Config("need dt_max > 0, k0 ≥ 2, max_refinements ≥ 1, n_sd > 0".into()));
        }
        if self.market.curves.is_none() && (self.market.scenarios == 0 || !(self.market.horizon > 0.0)) {
            return Err(Error::Config("need scenarios ≥ 1 and a positive horizon".into()));
        }
        let r = &self.report;
        if r.histogram_bins == 0 || !(r.confidence > 0.0 && r.confidence < 1.0) {
            return Err(Error::Config("need histogram_bins ≥ 1 and confidence in (0, 1)".into()));
        }
        if let Some(df) = r.discount_factor {
            if !(df > 0.0 && df <= 1.0) {
                return Err(Error::Config("discount_factor must lie in (0, 1]".into()));
            }
        }
        let s = &self.sampling.greedy;
        if s.k_folds < 2 || s.i_max == 0 {
            return Err(Error::Config("need k_folds ≥ 2 and i_max ≥ 1".into()));
        }
        self.market.model.validate()
    }
}
