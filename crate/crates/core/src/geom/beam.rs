use super::mesh::{Point3, TetMesh};
use crate::error::{Error, Result};

/// Axis orders for the six tets of a cube cell. Each tet walks from the
/// cell's min corner to its max corner along the listed axes, so all cells
/// share the same main diagonal and neighbouring cells conform.
const KUHN_PATHS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// Structured box mesh of `nx × ny × nz` cubic cells of side `spacing` mm,
/// min corner at the origin, each cell split into 6 tetrahedra.
pub fn make_beam_mesh(nx: usize, ny: usize, nz: usize, spacing: f64) -> Result<TetMesh> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::InvalidInput("beam cell counts must be at least 1".into()));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(Error::InvalidInput(format!("beam spacing must be positive, got {spacing}")));
    }
    let overflow = || Error::InvalidInput("beam dimensions overflow the index type".into());
    let (sx, sy, sz) = (
        nx.checked_add(1).ok_or_else(overflow)?,
        ny.checked_add(1).ok_or_else(overflow)?,
        nz.checked_add(1).ok_or_else(overflow)?,
    );
    let node_count = sx.checked_mul(sy).and_then(|v| v.checked_mul(sz)).ok_or_else(overflow)?;
    nx.checked_mul(ny)
        .and_then(|v| v.checked_mul(nz))
        .and_then(|v| v.checked_mul(6))
        .ok_or_else(overflow)?;

    let id = |i: usize, j: usize, k: usize| i + sx * (j + sy * k);
    let mut nodes = Vec::with_capacity(node_count);
    for k in 0..sz {
        for j in 0..sy {
            for i in 0..sx {
                nodes.push(Point3::new(i as f64 * spacing, j as f64 * spacing, k as f64 * spacing));
            }
        }
    }

    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                for path in KUHN_PATHS {
                    let mut c = [i, j, k];
                    let mut tet = [id(c[0], c[1], c[2]), 0, 0, 0];
                    for (step, &axis) in path.iter().enumerate() {
                        c[axis] += 1;
                        tet[step + 1] = id(c[0], c[1], c[2]);
                    }
                    let vol = super::mesh::signed_volume(&nodes[tet[0]], &nodes[tet[1]], &nodes[tet[2]], &nodes[tet[3]]);
                    if vol < 0.0 {
                        tet.swap(2, 3);
                    }
                    tets.push(tet);
                }
            }
        }
    }
    TetMesh::from_raw(nodes, tets)
}
