//! Snapshots, POD bases, Galerkin reduced models and the error budget.

mod basis;
mod budget;
mod checkpoint;
mod reduced;

pub use basis::{
    append_snapshots, pod_basis, projection_error, reduced_model_error, PodTarget, ReducedBasis,
    SnapshotMatrix,
};
pub use budget::ErrorBudget;
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use reduced::{
    project, residual_norm, residual_norms, select_dimension, DimensionSelection, ReducedModel,
    ReducedSolution, ResidualAggregation,
};
