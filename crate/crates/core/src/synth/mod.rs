//! Synthetic deformation cases with known ground truth.

mod bundle;
mod generate;
mod spec;

pub use bundle::{load_case, save_case, BUNDLE_FILES, BUNDLE_SCHEMA_VERSION, CASE_FILE};
pub use generate::{
    corrupt_patch, generate_case, max_surface_displacement, solve_ground_truth, AppliedBc, AppliedForce, CorruptedPatch, SynthCase, GENERATOR_CG_TOL,
    MIN_FIXED_NODES,
};
pub use spec::{SynthSpec, KPA_MM2_PER_NEWTON, PRESETS};
