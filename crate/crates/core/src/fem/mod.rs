//! Linear elastic tetrahedral finite elements.

mod assembly;
pub mod cg;
mod element;
mod forward;
mod jacobian;
mod material;
mod sparse;

pub use assembly::{assemble_stiffness, rigid_body_modes, strain_energy, StiffnessMatrix};
pub use cg::{cg_solve, CgOptions, CgOutcome, LinearOperator, Preconditioner};
pub use element::{element_stiffness, shape_gradients, strain_matrix, ElementMatrix};
pub use forward::{solve_forward, BcSpec};
pub use jacobian::jacobian_determinants;
pub use material::Material;
pub use sparse::SparseSymMatrix;
