//! Neural deformation pyramid: sinusoidal encodings, per-level MLPs and a
//! coarse-to-fine optimizer with optional strain-energy regularization.

mod adam;
mod config;
mod encode;
mod grad_check;
mod level;
mod mlp;
mod optimize;
pub mod tape;

pub use adam::Adam;
pub use config::PyramidConfig;
pub use encode::{encode, encode_all, NormFrame, NORMALIZED_HALF_WIDTH};
pub use grad_check::{grad_check, GradCheckReport};
pub use level::{LevelProblem, LevelSpec, LossTerms};
pub use mlp::{MlpParams, MLP_INPUT, MLP_OUTPUT};
pub use optimize::{optimize, save_trace_csv, trace_csv, PyramidInput, PyramidResult, TraceRow};
