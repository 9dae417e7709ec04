//! Meshes, point clouds, the boundary interpolation operator, structured
//! test meshes and surface geodesics.

mod beam;
mod geodesic;
pub mod io;
mod kdtree;
mod mesh;
mod phi;

pub use beam::make_beam_mesh;
pub use geodesic::{geodesic_distance, GeodesicField};
pub use kdtree::{median_nn_spacing, KdTree};
pub use mesh::{signed_volume, Point3, PointCloud, SurfaceMesh, TetMesh, Vec3, MIN_TET_VOLUME};
pub use phi::InterpolationOp;
