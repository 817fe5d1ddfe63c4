//! End-to-end valuation of a scenario set: discretization control, greedy
//! basis construction, the error budget and the risk figures of the report.

mod config;
mod report;
mod run;

pub use config::{GridConfig, MarketConfig, PipelineConfig, ReportConfig, SamplingConfig, Tolerances};
pub use report::{
    emit_report, histogram, market_risk_class, percentile_scenarios, read_scenarios_csv, var_vev,
    write_scenarios_csv, HistogramBin, Percentiles, RiskReport, ScenarioValue, SolveCounts,
    SolverKind, Timings, VaRResult, MRM_BANDS,
};
pub use run::{
    discretize, prepare, run_greedy, run_pipeline, Discretization, Prepared,
};
