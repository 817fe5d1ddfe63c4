//! Greedy selection of training scenarios for the reduced basis.
//!
//! The classical variant scores a fixed random candidate set with the residual
//! estimator. The adaptive variant grows its candidate set with the scenarios a
//! PCR surrogate ranks highest across the whole space.

mod greedy;
mod pcr;

pub use greedy::{
    adaptive_greedy, classical_greedy, evaluate_residuals, worst_candidate, write_trace_csv, ErrorModel,
    GreedyConfig, GreedyMode, GreedyOutcome, GreedyRecord,
};
pub use pcr::{
    assign_folds, fit_pcr, kfold_msep, msep_adjusted, msep_apparent, pca_projection_error,
    relative_pca_error, sampling_error, select_surrogate, CrossValidation, LearningData,
    Predictor, SamplingError, SurrogateModel,
};
