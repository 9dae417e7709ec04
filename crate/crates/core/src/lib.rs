//! Non-rigid registration of a tetrahedral organ model to a partial
//! intraoperative surface point cloud.

pub mod correspond;
pub mod error;
pub mod fem;
pub mod geom;
pub mod interact;
pub mod metrics;
pub mod pbm;
pub mod pyramid;
pub mod synth;

pub use error::{Error, Result};
