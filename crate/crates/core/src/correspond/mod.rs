//! Correspondence sets, nearest-neighbour matching, assignment and rigid
//! alignment.

pub mod io;
mod lap;
mod matching;
mod rigid;
mod set;

pub use lap::{assignment_score, lap_binarize};
pub use matching::{default_radius, mutual_nn, prune_outliers};
pub use rigid::{check_spread, icp_rigid, IcpResult, RigidTransform};
pub use set::{residuals, CorrespondenceSet};
