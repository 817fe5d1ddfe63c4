use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::greedy_sampling::{GreedyMode, GreedyRecord};
use crate::grid_control::{GridStudy, TimeStepResult};
use crate::pod_core::ErrorBudget;
use crate::sensitivity::{write_sensitivity_csv, SensitivityReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Full,
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioValue {
    pub scenario_id: usize,
    pub spot: f64,
    pub value: f64,
    pub solver: SolverKind,
}

/// Index into the sorted sample of the nearest-rank `p`-th percentile.
fn nearest_rank(n: usize, p: f64) -> usize {
    let rank = (p / 100.0 * n as f64 - 1e-9).ceil() as usize;
    rank.clamp(1, n) - 1
}

/// Favorable (90th), moderate (50th) and unfavorable (10th) nearest-rank
/// percentiles with the input positions they were taken from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub favorable: f64,
    pub moderate: f64,
    pub unfavorable: f64,
    pub positions: [usize; 3],
}

pub fn percentile_scenarios(values: &[f64]) -> Result<Percentiles> {
    if values.is_empty() {
        return Err(Error::Validation("no values".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("scenario value {v}")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let pick = |p: f64| order[nearest_rank(values.len(), p)];
    let positions = [pick(90.0), pick(50.0), pick(10.0)];
    Ok(Percentiles {
        favorable: values[positions[0]],
        moderate: values[positions[1]],
        unfavorable: values[positions[2]],
        positions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VaRResult {
    pub confidence: f64,
    pub var: f64,
    pub discount_factor: f64,
    pub var_price: f64,
    pub holding_period: f64,
    pub vev: f64,
}

/// VaR is the (1 − confidence) nearest-rank percentile of the values;
/// VEV = (sqrt(3.842 − 2 ln(VaR·DF)) − 1.96)/sqrt(T).
pub fn var_vev(values: &[f64], confidence: f64, discount_factor: f64, holding_period: f64) -> Result<VaRResult> {
    if values.is_empty() {
        return Err(Error::Validation("no values".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) || !(holding_period > 0.0) {
        return Err(Error::Validation("need confidence in (0, 1) and T > 0".into()));
    }
    if !(discount_factor > 0.0 && discount_factor <= 1.0) {
        return Err(Error::Validation(format!("discount factor {discount_factor} outside (0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let var = sorted[nearest_rank(sorted.len(), 100.0 * (1.0 - confidence))];
    let var_price = var * discount_factor;
    if !(var_price > 0.0) {
        return Err(Error::Domain(format!("VaR in price space is {var_price}")));
    }
    let inner = 3.842 - 2.0 * var_price.ln();
    if inner < 0.0 {
        return Err(Error::Domain(format!("VaR in price space {var_price} too large for the VEV formula")));
    }
    Ok(VaRResult {
        confidence,
        var,
        discount_factor,
        var_price,
        holding_period,
        vev: (inner.sqrt() - 1.96) / holding_period.sqrt(),
    })
}

/// Market-risk class bands: class k covers VEV in [lower, upper).
pub const MRM_BANDS: [(u8, f64, f64); 7] = [
    (1, f64::NEG_INFINITY, 0.005),
    (2, 0.005, 0.05),
    (3, 0.05, 0.12),
    (4, 0.12, 0.20),
    (5, 0.20, 0.30),
    (6, 0.30, 0.80),
    (7, 0.80, f64::INFINITY),
];

pub fn market_risk_class(vev: f64) -> u8 {
    MRM_BANDS
        .iter()
        .find(|(_, lo, hi)| vev >= *lo && vev < *hi)
        .map_or(7, |b| b.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Equal-width bins over [min, max]; the last bin is closed.
pub fn histogram(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() || bins == 0 {
        return vec![];
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![HistogramBin {
            lower: lo,
            upper: hi,
            count: values.len(),
        }];
    }
    let w = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lower: lo + w * i as f64,
            upper: if i + 1 == bins { hi } else { lo + w * (i + 1) as f64 },
            count: 0,
        })
        .collect();
    for v in values {
        let i = (((v - lo) / w) as usize).min(bins - 1);
        out[i].count += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveCounts {
    /// Training full solves ℓ of the greedy loop.
    pub full: usize,
    /// Reduced valuations, N − ℓ.
    pub reduced: usize,
    /// Full solves spent on grid, time-step and dimension control.
    pub diagnostic_full: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub t_grid_control: f64,
    /// Basis construction: greedy loop plus dimension selection.
    pub t_q: f64,
    /// Reduced valuation of the N − ℓ scenarios.
    pub t_eva: f64,
    pub t_full_per_scenario: f64,
    pub t_reduced_per_scenario: f64,
    /// N·t_full over T_Q + T_eva.
    pub speedup: f64,
    pub per_scenario_speedup: f64,
    pub svd_rows: usize,
    pub svd_cols: usize,
    pub t_svd_randomized: Option<f64>,
    pub t_svd_dense: Option<f64>,
    pub svd_speedup: Option<f64>,
    pub t_total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub scenarios: Vec<ScenarioValue>,
    pub percentiles: Percentiles,
    /// Scenario ids at the favorable, moderate and unfavorable percentiles.
    pub percentile_ids: [usize; 3],
    pub var: VaRResult,
    pub market_risk_class: u8,
    pub budget: ErrorBudget,
    pub counts: SolveCounts,
    pub timings: Timings,
    pub mode: GreedyMode,
    pub m: usize,
    pub h: f64,
    pub dt: f64,
    pub d: usize,
    pub time_step: Option<TimeStepResult>,
    pub grid_history: Vec<GridStudy>,
    pub greedy_trace: Vec<GreedyRecord>,
    /// (d, ε_POD, ε_RM) of every dimension tried.
    pub dimension_history: Vec<(usize, f64, f64)>,
    pub histogram: Vec<HistogramBin>,
    pub sensitivity: Option<SensitivityReport>,
    pub grid_converged: bool,
    pub greedy_converged: bool,
    pub dimension_converged: bool,
    pub sampling_converged: bool,
    pub converged: bool,
}

pub fn write_scenarios_csv(rows: &[ScenarioValue], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_scenarios_csv(path: &Path) -> Result<Vec<ScenarioValue>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<ScenarioValue>, _>>()?;
    Ok(rows)
}

fn write_histogram_csv(bins: &[HistogramBin], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for b in bins {
        w.serialize(b)?;
    }
    w.flush()?;
    Ok(())
}

fn flag(ok: bool) -> &'static str {
    if ok {
        "yes"
    } else {
        "NO"
    }
}

fn summary(r: &RiskReport) -> String {
    let mut s = String::new();
    let b = &r.budget;
    let _ = writeln!(s, "# Risk report\n");
    let _ = writeln!(s, "Converged: **{}**\n", flag(r.converged));
    let _ = writeln!(s, "| scenario | id | value |\n|---|---|---|");
    for (name, id, v) in [
        ("favorable (90th)", r.percentile_ids[0], r.percentiles.favorable),
        ("moderate (50th)", r.percentile_ids[1], r.percentiles.moderate),
        ("unfavorable (10th)", r.percentile_ids[2], r.percentiles.unfavorable),
    ] {
        let _ = writeln!(s, "| {name} | {id} | {v:.6} |");
    }
    let _ = writeln!(
        s,
        "\nVaR ({:.1}%): {:.6}, discount factor {:.6}, price space {:.6}",
        100.0 * r.var.confidence,
        r.var.var,
        r.var.discount_factor,
        r.var.var_price
    );
    let _ = writeln!(
        s,
        "VEV over {:.2} years: {:.4}%, market-risk class {}\n",
        r.var.holding_period,
        100.0 * r.var.vev,
        r.market_risk_class
    );
    let _ = writeln!(s, "## Error budget\n\n| part | estimate | tolerance |\n|---|---|---|");
    let _ = writeln!(s, "| ε_h | {:.3e} | {:.1e} |", b.eps_h, b.e_tol_h);
    let _ = writeln!(s, "| ε_POD + ε_RM | {:.3e} + {:.3e} | {:.1e} |", b.eps_pod, b.eps_rm, b.e_tol_d);
    let _ = writeln!(s, "| ε_samp | {:.3e} | {:.1e} |", b.eps_samp, b.e_tol_samp);
    let _ = writeln!(s, "| ε_T | {:.3e} | {:.1e} |", b.eps_total, b.e_tol);
    let _ = writeln!(
        s,
        "\nStages converged: grid {}, greedy {}, dimension {}, sampling {}\n",
        flag(r.grid_converged),
        flag(r.greedy_converged),
        flag(r.dimension_converged),
        flag(r.sampling_converged)
    );
    let _ = writeln!(s, "## Discretization\n");
    let _ = writeln!(s, "M = {}, h = {:.4e}, Δt = {:.6} years, d = {}, greedy mode {:?}", r.m, r.h, r.dt, r.d, r.mode);
    let _ = writeln!(
        s,
        "\nFull solves ℓ = {}, reduced solves N − ℓ = {}, diagnostic full solves {}\n",
        r.counts.full, r.counts.reduced, r.counts.diagnostic_full
    );
    let t = &r.timings;
    let _ = writeln!(s, "## Timings\n");
    let _ = writeln!(
        s,
        "T_Q = {:.3} s, T_eva = {:.3} s, full solve {:.4} s, reduced solve {:.5} s, speedup {:.2} (per scenario {:.1})",
        t.t_q, t.t_eva, t.t_full_per_scenario, t.t_reduced_per_scenario, t.speedup, t.per_scenario_speedup
    );
    if let (Some(a), Some(d)) = (t.t_svd_randomized, t.t_svd_dense) {
        let _ = writeln!(s, "\nSVD of the {}×{} snapshot matrix: randomized {a:.3} s, dense {d:.3} s", t.svd_rows, t.svd_cols);
    }
    if let Some(sens) = &r.sensitivity {
        let _ = writeln!(s, "\n## Sensitivity of ε_T\n\n| factor | S_i | S_Ti |\n|---|---|---|");
        for f in &sens.factors {
            let _ = writeln!(s, "| {} | {:.3} | {:.3} |", f.factor, f.s_i, f.s_ti);
        }
    }
    s
}

/// Writes scenarios.csv, histogram.csv, error_budget.json, sensitivity.csv,
/// timings.json, greedy_trace.csv, grid_study.csv, report.json and summary.md.
pub fn emit_report(report: &RiskReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_scenarios_csv(&report.scenarios, &dir.join("scenarios.csv"))?;
    write_histogram_csv(&report.histogram, &dir.join("histogram.csv"))?;
    std::fs::write(dir.join("error_budget.json"), serde_json::to_string_pretty(&report.budget)?)?;
    write_sensitivity_csv(report.sensitivity.as_ref(), &dir.join("sensitivity.csv"))?;
    std::fs::write(dir.join("timings.json"), serde_json::to_string_pretty(&report.timings)?)?;
    crate::greedy_sampling::write_trace_csv(&report.greedy_trace, &dir.join("greedy_trace.csv"))?;
    crate::grid_control::write_grid_study_csv(&report.grid_history, &dir.join("grid_study.csv"))?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    std::fs::write(dir.join("summary.md"), summary(report))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_percentiles() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let p = percentile_scenarios(&v).unwrap();
        assert_eq!((p.favorable, p.moderate, p.unfavorable), (90.0, 50.0, 10.0));
    }

    #[test]
    fn par_vev() {
        let r = var_vev(&[1.0], 0.975, 1.0, 1.0).unwrap();
        assert!((r.vev - (3.842f64.sqrt() - 1.96)).abs() < 1e-12);
        assert_eq!(market_risk_class(0.013285), 2);
    }

    #[test]
    fn nonpositive_var_is_a_domain_error() {
        assert!(matches!(var_vev(&[-0.5, 1.0], 0.975, 1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn histogram_counts_everything() {
        let v = [0.0, 0.1, 0.5, 1.0, 1.0];
        let h = histogram(&v, 4);
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 5);
        assert_eq!(h[3].count, 2);
    }
}
