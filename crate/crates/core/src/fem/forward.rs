use super::cg::{cg_solve, CgOptions, CgOutcome, LinearOperator};
use super::sparse::SparseSymMatrix;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use std::collections::BTreeMap;

/// Boundary conditions for a static solve: prescribed nodal displacements
/// (Dirichlet) and point loads (Neumann).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BcSpec {
    pub fixed: BTreeMap<usize, Vec3>,
    pub forces: BTreeMap<usize, Vec3>,
}

impl BcSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fix(&mut self, node: usize, displacement: Vec3) -> &mut Self {
        self.fixed.insert(node, displacement);
        self
    }

    /// Loads accumulate when applied twice to the same node.
    pub fn load(&mut self, node: usize, force: Vec3) -> &mut Self {
        *self.forces.entry(node).or_insert_with(Vec3::zeros) += force;
        self
    }

    fn check(&self, node_count: usize) -> Result<()> {
        for &n in self.fixed.keys().chain(self.forces.keys()) {
            if n >= node_count {
                return Err(Error::IndexOutOfRange { index: n, count: node_count });
            }
        }
        if self.fixed.values().chain(self.forces.values()).any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("boundary condition".into()));
        }
        Ok(())
    }
}

/// K with Dirichlet rows and columns replaced by identity.
struct Constrained<'a> {
    k: &'a SparseSymMatrix,
    mask: Vec<bool>,
}

impl LinearOperator for Constrained<'_> {
    fn dim(&self) -> usize {
        self.k.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = if self.mask[i] {
                x[i]
            } else {
                self.k.row(i).filter(|&(j, _)| !self.mask[j]).map(|(j, v)| v * x[j]).sum()
            };
        }
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        Some(
            self.k
                .diagonal()
                .into_iter()
                .zip(&self.mask)
                .map(|(d, &m)| if m { 1.0 } else { d })
                .collect(),
        )
    }
}

/// Solve K u = f subject to `bc`. Without at least one fixed node in each
/// connected component the system is singular; CG then reports failure.
pub fn solve_forward(k: &SparseSymMatrix, bc: &BcSpec, opts: &CgOptions) -> Result<CgOutcome> {
    let n = k.dim() / 3;
    bc.check(n)?;
    let mut mask = vec![false; k.dim()];
    let mut ud = vec![0.0; k.dim()];
    for (&node, d) in &bc.fixed {
        for c in 0..3 {
            mask[3 * node + c] = true;
            ud[3 * node + c] = d[c];
        }
    }
    let kud = k.mul_vec(&ud)?;
    let mut rhs: Vec<f64> = (0..k.dim()).map(|i| if mask[i] { ud[i] } else { -kud[i] }).collect();
    for (&node, f) in &bc.forces {
        for c in 0..3 {
            if !mask[3 * node + c] {
                rhs[3 * node + c] += f[c];
            }
        }
    }
    let op = Constrained { k, mask };
    cg_solve(&op, &rhs, Some(&ud), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_stiffness, cg::Preconditioner, Material};
    use crate::geom::make_beam_mesh;
    use nalgebra::{DMatrix, DVector};

    fn tight() -> CgOptions {
        CgOptions {
            tol: 1e-12,
            max_iter: 5000,
            preconditioner: Preconditioner::Jacobi,
        }
    }

    /// Independent oracle: dense partitioned solve K_ff u_f = f_f − K_fd u_d.
    fn dense_solve(k: &SparseSymMatrix, bc: &BcSpec) -> Vec<f64> {
        let kd = k.to_dense();
        let n = k.dim();
        let fixed: Vec<bool> = (0..n).map(|i| bc.fixed.contains_key(&(i / 3))).collect();
        let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
        let mut u = vec![0.0; n];
        for (&node, d) in &bc.fixed {
            for c in 0..3 {
                u[3 * node + c] = d[c];
            }
        }
        let mut f = vec![0.0; n];
        for (&node, v) in &bc.forces {
            for c in 0..3 {
                f[3 * node + c] += v[c];
            }
        }
        let kff = DMatrix::from_fn(free.len(), free.len(), |a, b| kd[(free[a], free[b])]);
        let rhs = DVector::from_fn(free.len(), |a, _| {
            f[free[a]] - (0..n).filter(|&j| fixed[j]).map(|j| kd[(free[a], j)] * u[j]).sum::<f64>()
        });
        let sol = kff.lu().solve(&rhs).unwrap();
        for (a, &i) in free.iter().enumerate() {
            u[i] = sol[a];
        }
        u
    }

    fn beam_case() -> (SparseSymMatrix, BcSpec, usize) {
        let mesh = make_beam_mesh(3, 2, 2, 10.0).unwrap();
        let k = assemble_stiffness(&mesh, &Material::default()).unwrap();
        let mut bc = BcSpec::new();
        for (i, p) in mesh.nodes.iter().enumerate() {
            if p.x == 0.0 {
                bc.fix(i, Vec3::zeros());
            }
        }
        let tip = mesh.nodes.iter().position(|p| p.x == 30.0 && p.y == 20.0 && p.z == 20.0).unwrap();
        (k, bc, tip)
    }

    #[test]
    fn matches_dense_oracle() {
        let (k, mut bc, tip) = beam_case();
        bc.load(tip, Vec3::new(0.0, 0.0, -50.0));
        let cg = solve_forward(&k, &bc, &tight()).unwrap().into_converged().unwrap();
        let dense = dense_solve(&k, &bc);
        let scale = dense.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(scale > 0.0);
        for (a, b) in cg.iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-7 * scale, "{a} vs {b}");
        }
        assert!(cg[3 * tip + 2] < 0.0);
    }

    #[test]
    fn superposition_holds() {
        let (k, bc, tip) = beam_case();
        let mut a = bc.clone();
        a.load(tip, Vec3::new(0.0, 10.0, 0.0));
        let mut b = bc.clone();
        b.load(tip - 1, Vec3::new(5.0, 0.0, -3.0));
        let mut ab = bc;
        ab.load(tip, Vec3::new(0.0, 10.0, 0.0)).load(tip - 1, Vec3::new(5.0, 0.0, -3.0));
        let ua = solve_forward(&k, &a, &tight()).unwrap().x;
        let ub = solve_forward(&k, &b, &tight()).unwrap().x;
        let uab = solve_forward(&k, &ab, &tight()).unwrap().x;
        let scale = uab.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..uab.len() {
            assert!((ua[i] + ub[i] - uab[i]).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn prescribed_translation_is_reproduced() {
        let (k, _, _) = beam_case();
        let mut bc = BcSpec::new();
        let t = Vec3::new(1.0, -2.0, 0.5);
        for n in [0, 1, 2, 5] {
            bc.fix(n, t);
        }
        let u = solve_forward(&k, &bc, &tight()).unwrap().into_converged().unwrap();
        for c in u.chunks(3) {
            assert!((Vec3::new(c[0], c[1], c[2]) - t).amax() < 1e-8);
        }
    }

    #[test]
    fn no_load_no_displacement() {
        let (k, bc, _) = beam_case();
        let out = solve_forward(&k, &bc, &tight()).unwrap();
        assert!(out.converged && out.x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_nodes() {
        let (k, mut bc, _) = beam_case();
        bc.load(10_000, Vec3::x());
        assert!(matches!(solve_forward(&k, &bc, &tight()), Err(Error::IndexOutOfRange { .. })));
    }
}
