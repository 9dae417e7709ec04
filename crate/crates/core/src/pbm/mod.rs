//! Regularized one-pass volumetric solve and the end-to-end registration
//! pipeline.

mod pipeline;
mod system;

pub use pipeline::{extend_to_volume, register, Diagnostics, PipelineConfig, PipelineInput, Registration, RegistrationMode};
pub use system::{solve_pbm, PbmConfig, PbmOperator, PbmProblem, PbmSolution};
