use super::element::shape_gradients;
use crate::error::{Error, Result};
use crate::geom::TetMesh;
use nalgebra::Matrix3;

/// det(I + ∇u) for each tetrahedron of a node-major displacement field.
pub fn jacobian_determinants(mesh: &TetMesh, u: &[f64]) -> Result<Vec<f64>> {
    let expected = 3 * mesh.node_count();
    if u.len() != expected {
        return Err(Error::LengthMismatch { expected, actual: u.len() });
    }
    mesh.tets
        .iter()
        .map(|tet| {
            let (grads, _) = shape_gradients(&tet.map(|i| mesh.nodes[i]))?;
            let mut f = Matrix3::identity();
            for (a, &node) in tet.iter().enumerate() {
                let ua = nalgebra::Vector3::new(u[3 * node], u[3 * node + 1], u[3 * node + 2]);
                f += ua * grads[a].transpose();
            }
            Ok(f.determinant())
        })
        .collect()
}
