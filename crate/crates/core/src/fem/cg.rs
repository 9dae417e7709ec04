use crate::error::{Error, Result};

/// Symmetric positive (semi-)definite operator applied matrix-free.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// Diagonal, when cheaply available; used by the Jacobi preconditioner.
    fn diagonal(&self) -> Option<Vec<f64>> {
        None
    }
}

impl LinearOperator for super::SparseSymMatrix {
    fn dim(&self) -> usize {
        super::SparseSymMatrix::dim(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y)
    }

    fn diagonal(&self) -> Option<Vec<f64>> {
        Some(super::SparseSymMatrix::diagonal(self))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preconditioner {
    #[default]
    None,
    Jacobi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Stop once ‖b − Ax‖ / ‖b‖ ≤ tol.
    pub tol: f64,
    pub max_iter: usize,
    pub preconditioner: Preconditioner,
}

impl CgOptions {
    pub const DEFAULT_TOL: f64 = 1e-5;

    /// Default tolerance and `10 · node_count` iterations.
    pub fn for_nodes(node_count: usize) -> Self {
        CgOptions {
            tol: Self::DEFAULT_TOL,
            max_iter: 10 * node_count.max(1),
            preconditioner: Preconditioner::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome {
    /// Best iterate seen (lowest residual).
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

impl CgOutcome {
    pub fn into_converged(self) -> Result<Vec<f64>> {
        if self.converged {
            Ok(self.x)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                residual: self.relative_residual,
            })
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradient, optionally warm-started at `x0`.
pub fn cg_solve<A: LinearOperator + ?Sized>(a: &A, b: &[f64], x0: Option<&[f64]>, opts: &CgOptions) -> Result<CgOutcome> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: b.len(),
        });
    }
    if let Some(x0) = x0 {
        if x0.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: x0.len(),
            });
        }
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput(format!("CG tolerance must be positive, got {}", opts.tol)));
    }
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x: vec![0.0; n],
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }
    let inv_diag = match opts.preconditioner {
        Preconditioner::None => None,
        Preconditioner::Jacobi => {
            let d = a
                .diagonal()
                .ok_or_else(|| Error::InvalidInput("operator exposes no diagonal for Jacobi".into()))?;
            Some(d.iter().map(|&v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect::<Vec<f64>>())
        }
    };
    let precondition = |r: &[f64], z: &mut [f64]| match &inv_diag {
        Some(inv) => z.iter_mut().zip(r).zip(inv).for_each(|((z, r), d)| *z = r * d),
        None => z.copy_from_slice(r),
    };

    let mut x = x0.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
    let mut ax = vec![0.0; n];
    a.apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let mut rel = dot(&r, &r).sqrt() / b_norm;
    let mut best = (rel, x.clone());
    if rel <= opts.tol {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            relative_residual: rel,
            converged: true,
        });
    }
    let mut z = vec![0.0; n];
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=opts.max_iter {
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        if !rel.is_finite() {
            return Err(Error::NonFinite("CG residual".into()));
        }
        if rel < best.0 {
            best = (rel, x.clone());
        }
        if rel <= opts.tol {
            return Ok(CgOutcome {
                x,
                iterations: it,
                relative_residual: rel,
                converged: true,
            });
        }
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(CgOutcome {
        x: best.1,
        iterations: opts.max_iter,
        relative_residual: best.0,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::SparseSymMatrix;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Dense(DMatrix<f64>);

    impl LinearOperator for Dense {
        fn dim(&self) -> usize {
            self.0.nrows()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            let r = &self.0 * DVector::from_column_slice(x);
            y.copy_from_slice(r.as_slice());
        }
        fn diagonal(&self) -> Option<Vec<f64>> {
            Some(self.0.diagonal().iter().copied().collect())
        }
    }

    fn opts(tol: f64) -> CgOptions {
        CgOptions {
            tol,
            max_iter: 200,
            preconditioner: Preconditioner::None,
        }
    }

    #[test]
    fn identity_in_one_iteration() {
        let a = Dense(DMatrix::identity(4, 4));
        let b = [1.0, -2.0, 3.5, 0.25];
        let out = cg_solve(&a, &b, None, &opts(1e-12)).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.x, b.to_vec());
    }

    #[test]
    fn diagonal_system() {
        let a = SparseSymMatrix::from_triplets(3, vec![(0, 0, 1.0), (1, 1, 2.0), (2, 2, 4.0)]).unwrap();
        let out = cg_solve(&a, &[1.0, 2.0, 4.0], None, &opts(1e-12)).unwrap();
        assert!(out.converged);
        for v in out.x {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let a = Dense(DMatrix::identity(3, 3) * 2.0);
        let out = cg_solve(&a, &[0.0; 3], Some(&[1.0, 1.0, 1.0]), &opts(1e-5)).unwrap();
        assert_eq!((out.x, out.iterations), (vec![0.0; 3], 0));
    }

    #[test]
    fn random_spd_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let m = DMatrix::from_fn(20, 20, |_, _| rng.random_range(-1.0..1.0));
        let a = &m * m.transpose() + DMatrix::identity(20, 20) * 0.5;
        let b = DVector::from_fn(20, |_, _| rng.random_range(-1.0..1.0));
        let direct = a.clone().lu().solve(&b).unwrap();
        for pc in [Preconditioner::None, Preconditioner::Jacobi] {
            let o = CgOptions {
                tol: 1e-12,
                max_iter: 500,
                preconditioner: pc,
            };
            let out = cg_solve(&Dense(a.clone()), b.as_slice(), None, &o).unwrap();
            assert!(out.converged);
            let err = (DVector::from_vec(out.x) - &direct).amax();
            assert!(err < 1e-6, "{pc:?}: {err}");
        }
    }

    #[test]
    fn reports_non_convergence_with_best_iterate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DMatrix::from_fn(30, 30, |_, _| rng.random_range(-1.0..1.0));
        let a = Dense(&m * m.transpose() + DMatrix::identity(30, 30) * 1e-3);
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let o = CgOptions {
            tol: 1e-14,
            max_iter: 3,
            preconditioner: Preconditioner::None,
        };
        let out = cg_solve(&a, &b, None, &o).unwrap();
        assert!(!out.converged);
        assert!(out.relative_residual < 1.0);
        assert!(matches!(out.into_converged(), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn warm_start_at_solution() {
        let a = Dense(DMatrix::identity(2, 2) * 3.0);
        let out = cg_solve(&a, &[3.0, 6.0], Some(&[1.0, 2.0]), &opts(1e-10)).unwrap();
        assert_eq!((out.iterations, out.x), (0, vec![1.0, 2.0]));
    }
}
