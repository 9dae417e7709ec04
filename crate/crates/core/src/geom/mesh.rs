use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position in millimeters.
pub type Point3 = nalgebra::Point3<f64>;
/// Displacement or direction in millimeters.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Volumes below this are treated as degenerate (mm³).
pub const MIN_TET_VOLUME: f64 = 1e-12;

pub(crate) fn check_finite(p: &Point3, what: &str) -> Result<()> {
    if p.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} coordinate {p:?}")))
    }
}

/// Signed volume of the tetrahedron (a, b, c, d); positive when
/// `d` lies on the side of triangle (a, b, c) given by the right-hand rule.
pub fn signed_volume(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> f64 {
    (b - a).cross(&(c - a)).dot(&(d - a)) / 6.0
}

/// Triangle surface with optional per-vertex normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
    pub normals: Option<Vec<Vec3>>,
    pub closed: bool,
}

impl SurfaceMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = SurfaceMesh {
            vertices,
            triangles,
            normals: None,
            closed: false,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.vertices {
            check_finite(v, "surface vertex")?;
        }
        for (t, tri) in self.triangles.iter().enumerate() {
            for &i in tri {
                if i >= self.vertices.len() {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        count: self.vertices.len(),
                    });
                }
            }
            if self.triangle_area(t) <= 0.0 {
                return Err(Error::Degenerate(format!("triangle {t} has zero area")));
            }
        }
        if let Some(normals) = &self.normals {
            if normals.len() != self.vertices.len() {
                return Err(Error::LengthMismatch {
                    expected: self.vertices.len(),
                    actual: normals.len(),
                });
            }
        }
        if self.closed && !self.is_closed_manifold() {
            return Err(Error::InvalidInput(
                "surface flagged closed but some edge is not shared by exactly two triangles".into(),
            ));
        }
        Ok(())
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (a, b, c) = (&self.vertices[a], &self.vertices[b], &self.vertices[c]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Every undirected edge is shared by exactly two triangles.
    pub fn is_closed_manifold(&self) -> bool {
        let mut counts: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        !counts.is_empty() && counts.values().all(|&c| c == 2)
    }

    /// Unique undirected edges, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|tri| (0..3).map(move |k| (tri[k], tri[(k + 1) % 3])))
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Area-weighted vertex normals from triangle winding.
    pub fn compute_normals(&self) -> Vec<Vec3> {
        let mut normals = vec![Vec3::zeros(); self.vertices.len()];
        for tri in &self.triangles {
            let [a, b, c] = *tri;
            let n = (self.vertices[b] - self.vertices[a]).cross(&(self.vertices[c] - self.vertices[a]));
            for &i in tri {
                normals[i] += n;
            }
        }
        for n in &mut normals {
            let len = n.norm();
            if len > 0.0 {
                *n /= len;
            }
        }
        normals
    }
}

/// Unordered collection of surface samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point cloud is empty".into()));
        }
        for p in &points {
            check_finite(p, "cloud point")?;
        }
        Ok(PointCloud { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Volumetric tetrahedral mesh with boundary nodes stored first.
///
/// `nodes[..boundary_count]` are exactly the nodes touched by a face that
/// belongs to a single tetrahedron. `original_index[i]` is the index node
/// `i` had in the input that produced this mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TetMesh {
    pub nodes: Vec<Point3>,
    pub tets: Vec<[usize; 4]>,
    pub boundary_count: usize,
    pub boundary_faces: Vec<[usize; 3]>,
    pub original_index: Vec<usize>,
}

impl TetMesh {
    /// Validates connectivity, detects the boundary and reorders nodes so
    /// boundary nodes come first. Tets must be positively oriented.
    pub fn from_raw(nodes: Vec<Point3>, tets: Vec<[usize; 4]>) -> Result<Self> {
        if tets.is_empty() {
            return Err(Error::InvalidInput("mesh has no tetrahedra".into()));
        }
        for p in &nodes {
            check_finite(p, "mesh node")?;
        }
        let mut used = vec![false; nodes.len()];
        for (t, tet) in tets.iter().enumerate() {
            for &i in tet {
                if i >= nodes.len() {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        count: nodes.len(),
                    });
                }
                used[i] = true;
            }
            let vol = signed_volume(&nodes[tet[0]], &nodes[tet[1]], &nodes[tet[2]], &nodes[tet[3]]);
            if vol.abs() < MIN_TET_VOLUME {
                return Err(Error::DegenerateTet { tet: t, volume: vol });
            }
            if vol < 0.0 {
                return Err(Error::InvertedTet { tet: t, volume: vol });
            }
        }
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::InvalidInput(format!("node {i} is not referenced by any tetrahedron")));
        }

        let faces = boundary_faces(&tets);
        let mut on_boundary = vec![false; nodes.len()];
        for f in &faces {
            for &i in f {
                on_boundary[i] = true;
            }
        }
        let mut order: Vec<usize> = (0..nodes.len()).filter(|&i| on_boundary[i]).collect();
        let boundary_count = order.len();
        order.extend((0..nodes.len()).filter(|&i| !on_boundary[i]));

        let mut new_of_old = vec![0usize; nodes.len()];
        for (new, &old) in order.iter().enumerate() {
            new_of_old[old] = new;
        }
        let remap = |i: usize| new_of_old[i];
        Ok(TetMesh {
            nodes: order.iter().map(|&old| nodes[old]).collect(),
            tets: tets.iter().map(|t| t.map(remap)).collect(),
            boundary_count,
            boundary_faces: faces.iter().map(|f| f.map(remap)).collect(),
            original_index: order,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        let [a, b, c, d] = self.tets[t];
        signed_volume(&self.nodes[a], &self.nodes[b], &self.nodes[c], &self.nodes[d])
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.tets.len()).map(|t| self.tet_volume(t)).sum()
    }

    pub fn boundary_nodes(&self) -> &[Point3] {
        &self.nodes[..self.boundary_count]
    }

    pub fn interpolation(&self) -> super::InterpolationOp {
        super::InterpolationOp::new(self.boundary_count, self.nodes.len()).expect("boundary count never exceeds node count")
    }

    /// The boundary surface ∂Ω over nodes `0..boundary_count`, outward wound.
    pub fn surface(&self) -> SurfaceMesh {
        let mut s = SurfaceMesh {
            vertices: self.boundary_nodes().to_vec(),
            triangles: self.boundary_faces.clone(),
            normals: None,
            closed: true,
        };
        s.normals = Some(s.compute_normals());
        s
    }

    /// Same connectivity with displaced node positions (`u` has 3 entries per node).
    pub fn displaced_nodes(&self, u: &[f64]) -> Result<Vec<Point3>> {
        if u.len() != 3 * self.nodes.len() {
            return Err(Error::LengthMismatch {
                expected: 3 * self.nodes.len(),
                actual: u.len(),
            });
        }
        Ok(self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, p)| p + Vec3::new(u[3 * i], u[3 * i + 1], u[3 * i + 2]))
            .collect())
    }
}

/// Faces that appear in exactly one tet, wound outward, in order of first appearance.
fn boundary_faces(tets: &[[usize; 4]]) -> Vec<[usize; 3]> {
    let mut seen: HashMap<[usize; 3], (usize, [usize; 3])> = HashMap::new();
    let mut order = Vec::new();
    for &[a, b, c, d] in tets {
        for face in [[b, c, d], [a, d, c], [a, b, d], [a, c, b]] {
            let mut key = face;
            key.sort_unstable();
            let entry = seen.entry(key).or_insert_with(|| {
                order.push(key);
                (0, face)
            });
            entry.0 += 1;
        }
    }
    order
        .into_iter()
        .filter_map(|k| {
            let (count, face) = seen[&k];
            (count == 1).then_some(face)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_tet() -> (Vec<Point3>, Vec<[usize; 4]>) {
        (
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
                Point3::new(0.0, 0.0, 1.0),
            ],
            vec![[0, 1, 2, 3]],
        )
    }

    #[test]
    fn single_tet_is_all_boundary() {
        let (nodes, tets) = unit_tet();
        let m = TetMesh::from_raw(nodes, tets).unwrap();
        assert_eq!(m.node_count(), 4);
        assert_eq!(m.boundary_count, 4);
        assert_eq!(m.boundary_faces.len(), 4);
        assert!(m.surface().is_closed_manifold());
    }

    #[test]
    fn boundary_faces_point_outward() {
        let (nodes, tets) = unit_tet();
        let m = TetMesh::from_raw(nodes, tets).unwrap();
        let centroid = m.nodes.iter().fold(Vec3::zeros(), |acc, p| acc + p.coords) / 4.0;
        for f in &m.boundary_faces {
            let (a, b, c) = (m.nodes[f[0]], m.nodes[f[1]], m.nodes[f[2]]);
            let n = (b - a).cross(&(c - a));
            let fc = (a.coords + b.coords + c.coords) / 3.0;
            assert!(n.dot(&(fc - centroid)) > 0.0);
        }
    }

    #[test]
    fn inverted_tet_rejected_with_id() {
        let (nodes, _) = unit_tet();
        let err = TetMesh::from_raw(nodes, vec![[0, 2, 1, 3]]).unwrap_err();
        assert!(matches!(err, Error::InvertedTet { tet: 0, .. }));
    }

    #[test]
    fn degenerate_and_dangling_rejected() {
        let flat = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(1.0, 1.0, 0.0),
        ];
        assert!(matches!(TetMesh::from_raw(flat, vec![[0, 1, 2, 3]]), Err(Error::DegenerateTet { .. })));
        let (nodes, _) = unit_tet();
        assert!(matches!(
            TetMesh::from_raw(nodes, vec![[0, 1, 2, 7]]),
            Err(Error::IndexOutOfRange { index: 7, .. })
        ));
    }

    #[test]
    fn surface_validation() {
        let v = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)];
        assert!(SurfaceMesh::new(v.clone(), vec![[0, 1, 2]]).is_err());
        assert!(SurfaceMesh::new(v, vec![[0, 1, 5]]).is_err());
    }

    #[test]
    fn empty_cloud_rejected() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![Point3::new(f64::NAN, 0.0, 0.0)]).is_err());
    }
}
