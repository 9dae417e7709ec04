use super::element::element_stiffness;
use super::material::Material;
use super::sparse::SparseSymMatrix;
use crate::error::{Error, Result};
use crate::geom::TetMesh;

/// Global stiffness over 3 DOFs per node (node-major: x, y, z).
pub type StiffnessMatrix = SparseSymMatrix;

pub fn assemble_stiffness(mesh: &TetMesh, mat: &Material) -> Result<StiffnessMatrix> {
    let mut triplets = Vec::with_capacity(mesh.tets.len() * 144);
    for (t, tet) in mesh.tets.iter().enumerate() {
        let p = tet.map(|i| mesh.nodes[i]);
        let ke = element_stiffness(&p, mat).map_err(|_| Error::DegenerateTet {
            tet: t,
            volume: mesh.tet_volume(t),
        })?;
        for a in 0..4 {
            for b in 0..4 {
                for i in 0..3 {
                    for j in 0..3 {
                        triplets.push((3 * tet[a] + i, 3 * tet[b] + j, ke[(3 * a + i, 3 * b + j)]));
                    }
                }
            }
        }
    }
    SparseSymMatrix::from_triplets(3 * mesh.node_count(), triplets)
}

/// `uᵀ K u`, without the ½ factor.
pub fn strain_energy(k: &StiffnessMatrix, u: &[f64]) -> Result<f64> {
    k.quadratic_form(u)
}

/// Rigid-body modes of the node set: three translations then three
/// linearized rotations about the origin.
pub fn rigid_body_modes(nodes: &[crate::geom::Point3]) -> Vec<Vec<f64>> {
    let mut modes = Vec::with_capacity(6);
    for axis in 0..3 {
        let mut t = vec![0.0; 3 * nodes.len()];
        for n in 0..nodes.len() {
            t[3 * n + axis] = 1.0;
        }
        modes.push(t);
    }
    for axis in 0..3 {
        let mut w = nalgebra::Vector3::zeros();
        w[axis] = 1.0;
        let r = nodes
            .iter()
            .flat_map(|p| {
                let v = w.cross(&p.coords);
                [v.x, v.y, v.z]
            })
            .collect();
        modes.push(r);
    }
    modes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::element::element_stiffness;
    use crate::geom::{make_beam_mesh, Point3};

    #[test]
    fn single_tet_equals_element_matrix() {
        let nodes = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 3.0),
        ];
        let mesh = TetMesh::from_raw(nodes.clone(), vec![[0, 1, 2, 3]]).unwrap();
        let mat = Material::default();
        let k = assemble_stiffness(&mesh, &mat).unwrap().to_dense();
        let ke = element_stiffness(&[nodes[0], nodes[1], nodes[2], nodes[3]], &mat).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(k[(i, j)], ke[(i, j)]);
            }
        }
    }

    #[test]
    fn disjoint_tets_are_block_diagonal() {
        let mut nodes = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        nodes.extend(nodes.clone().iter().map(|p| p + nalgebra::Vector3::new(5.0, 0.0, 0.0)));
        let mesh = TetMesh::from_raw(nodes, vec![[0, 1, 2, 3], [4, 5, 6, 7]]).unwrap();
        let k = assemble_stiffness(&mesh, &Material::default()).unwrap().to_dense();
        for i in 0..12 {
            for j in 12..24 {
                assert_eq!(k[(i, j)], 0.0);
                assert_eq!(k[(j, i)], 0.0);
            }
        }
    }

    #[test]
    fn beam_translation_is_null() {
        let mesh = make_beam_mesh(2, 2, 2, 10.0).unwrap();
        let k = assemble_stiffness(&mesh, &Material::default()).unwrap();
        assert!(k.is_symmetric());
        let t: Vec<f64> = (0..mesh.node_count()).flat_map(|_| [0.3, -1.0, 2.0]).collect();
        let kt = k.mul_vec(&t).unwrap();
        assert!(kt.iter().all(|v| v.abs() < 1e-9));
        assert!(strain_energy(&k, &t).unwrap().abs() < 1e-9);
    }

    #[test]
    fn psd_and_rigid_null_space() {
        use rand::{Rng, SeedableRng};
        let mesh = make_beam_mesh(3, 3, 3, 5.0).unwrap();
        let k = assemble_stiffness(&mesh, &Material::default()).unwrap();
        let norm = k.frobenius_norm();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let u: Vec<f64> = (0..k.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let uu: f64 = u.iter().map(|v| v * v).sum();
            assert!(strain_energy(&k, &u).unwrap() >= -1e-9 * norm * uu);
        }
        for m in rigid_body_modes(&mesh.nodes) {
            let uu: f64 = m.iter().map(|v| v * v).sum();
            assert!(strain_energy(&k, &m).unwrap().abs() <= 1e-9 * norm * uu);
        }
    }

    #[test]
    fn tet_order_does_not_change_assembly() {
        let mesh = make_beam_mesh(3, 2, 2, 4.0).unwrap();
        let mut shuffled = mesh.clone();
        shuffled.tets.reverse();
        shuffled.tets.rotate_left(7);
        let mat = Material::default();
        assert_eq!(assemble_stiffness(&mesh, &mat).unwrap(), assemble_stiffness(&shuffled, &mat).unwrap());
    }

    #[test]
    fn boundary_only_translation_stores_energy() {
        let mesh = make_beam_mesh(2, 2, 2, 10.0).unwrap();
        let k = assemble_stiffness(&mesh, &Material::default()).unwrap();
        let phi = mesh.interpolation();
        let surf: Vec<f64> = (0..mesh.boundary_count).flat_map(|_| [1.0, 0.0, 0.0]).collect();
        let u = phi.apply_transpose(&surf).unwrap();
        assert!(strain_energy(&k, &u).unwrap() > 0.0);
        assert_eq!(strain_energy(&k, &vec![0.0; 81]).unwrap(), 0.0);
        assert!(strain_energy(&k, &[0.0; 3]).is_err());
    }
}
