use nalgebra::{Matrix3, SMatrix, Vector3};

use super::material::Material;
use crate::error::{Error, Result};
use crate::geom::{signed_volume, Point3, MIN_TET_VOLUME};

pub type ElementMatrix = SMatrix<f64, 12, 12>;
pub type StrainMatrix = SMatrix<f64, 6, 12>;

/// Gradients of the four linear shape functions and the signed volume.
pub fn shape_gradients(p: &[Point3; 4]) -> Result<([Vector3<f64>; 4], f64)> {
    let vol = signed_volume(&p[0], &p[1], &p[2], &p[3]);
    if vol.abs() < MIN_TET_VOLUME {
        return Err(Error::Degenerate(format!("tetrahedron volume {vol:e}")));
    }
    let j = Matrix3::from_columns(&[p[1] - p[0], p[2] - p[0], p[3] - p[0]]);
    let inv = j.try_inverse().ok_or_else(|| Error::Degenerate("singular tetrahedron Jacobian".into()))?;
    // barycentric λ_k = row k of J⁻¹ · (x − p0), k = 1..3
    let g1 = inv.row(0).transpose();
    let g2 = inv.row(1).transpose();
    let g3 = inv.row(2).transpose();
    Ok(([-(g1 + g2 + g3), g1, g2, g3], vol))
}

/// Constant strain-displacement matrix, Voigt order (xx, yy, zz, xy, yz, zx).
pub fn strain_matrix(grads: &[Vector3<f64>; 4]) -> StrainMatrix {
    let mut b = StrainMatrix::zeros();
    for (a, g) in grads.iter().enumerate() {
        let c = 3 * a;
        b[(0, c)] = g.x;
        b[(1, c + 1)] = g.y;
        b[(2, c + 2)] = g.z;
        b[(3, c)] = g.y;
        b[(3, c + 1)] = g.x;
        b[(4, c + 1)] = g.z;
        b[(4, c + 2)] = g.y;
        b[(5, c)] = g.z;
        b[(5, c + 2)] = g.x;
    }
    b
}

/// `K_e = V_e · B_eᵀ D B_e` for the constant-strain tetrahedron, exactly symmetric.
pub fn element_stiffness(p: &[Point3; 4], mat: &Material) -> Result<ElementMatrix> {
    let (grads, vol) = shape_gradients(p)?;
    if vol < 0.0 {
        return Err(Error::Degenerate(format!("inverted tetrahedron, volume {vol:e}")));
    }
    let b = strain_matrix(&grads);
    let mut k = b.transpose() * (mat.material_matrix() * b) * vol;
    for i in 0..12 {
        for j in 0..i {
            k[(i, j)] = k[(j, i)];
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, Vector4};

    fn unit() -> [Point3; 4] {
        [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ]
    }

    fn skewed() -> [Point3; 4] {
        [
            Point3::new(0.3, -0.2, 0.1),
            Point3::new(2.1, 0.4, -0.3),
            Point3::new(0.5, 1.7, 0.2),
            Point3::new(0.2, 0.6, 1.9),
        ]
    }

    /// Barycentric coordinates by solving the 4×4 affine system directly.
    fn barycentric(p: &[Point3; 4], x: &Point3) -> Vector4<f64> {
        let m = Matrix4::from_fn(|r, c| if r == 0 { 1.0 } else { p[c][r - 1] });
        m.lu().solve(&Vector4::new(1.0, x.x, x.y, x.z)).unwrap()
    }

    /// ∫ BᵀDB dV with a 4-point Gauss rule and finite-difference shape gradients.
    fn quadrature_stiffness(p: &[Point3; 4], mat: &Material) -> ElementMatrix {
        let a = 0.585_410_196_624_968_5;
        let b = 0.138_196_601_125_010_5;
        let vol = signed_volume(&p[0], &p[1], &p[2], &p[3]);
        let d = mat.material_matrix();
        let mut k = ElementMatrix::zeros();
        for q in 0..4 {
            let w: [f64; 4] = std::array::from_fn(|i| if i == q { a } else { b });
            let x = Point3::from(p.iter().zip(w).fold(Vector3::zeros(), |acc, (pt, wi)| acc + pt.coords * wi));
            let h = 1e-6;
            let mut grads = [Vector3::zeros(); 4];
            for axis in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[axis] += h;
                xm[axis] -= h;
                let dl = (barycentric(p, &xp) - barycentric(p, &xm)) / (2.0 * h);
                for n in 0..4 {
                    grads[n][axis] = dl[n];
                }
            }
            let bm = strain_matrix(&grads);
            k += bm.transpose() * d * bm * (vol * 0.25);
        }
        k
    }

    fn rigid_modes(p: &[Point3; 4]) -> Vec<SMatrix<f64, 12, 1>> {
        let mut modes = Vec::new();
        for axis in 0..3 {
            let mut t = SMatrix::<f64, 12, 1>::zeros();
            for n in 0..4 {
                t[3 * n + axis] = 1.0;
            }
            modes.push(t);
            let mut w = Vector3::zeros();
            w[axis] = 1.0;
            let mut r = SMatrix::<f64, 12, 1>::zeros();
            for n in 0..4 {
                let v = w.cross(&p[n].coords);
                r.fixed_rows_mut::<3>(3 * n).copy_from(&v);
            }
            modes.push(r);
        }
        modes
    }

    #[test]
    fn rigid_modes_are_null() {
        let mat = Material::default();
        for p in [unit(), skewed()] {
            let k = element_stiffness(&p, &mat).unwrap();
            for m in rigid_modes(&p) {
                let r = (k * m).norm() / (k.norm() * m.norm());
                assert!(r < 1e-10, "relative residual {r}");
            }
        }
    }

    #[test]
    fn matches_quadrature_oracle() {
        for (p, mat) in [(unit(), Material::new(1.0, 0.0).unwrap()), (skewed(), Material::default())] {
            let k = element_stiffness(&p, &mat).unwrap();
            let q = quadrature_stiffness(&p, &mat);
            assert!((k - q).amax() < 1e-6 * k.amax(), "diff {}", (k - q).amax());
        }
    }

    #[test]
    fn scales_linearly_with_size() {
        let mat = Material::default();
        let p = skewed();
        let s = 2.5;
        let ps = p.map(|x| Point3::from(x.coords * s));
        let k = element_stiffness(&p, &mat).unwrap();
        let ks = element_stiffness(&ps, &mat).unwrap();
        assert!((ks - k * s).amax() < 1e-12 * ks.amax());
    }

    #[test]
    fn symmetric_psd() {
        let k = element_stiffness(&skewed(), &Material::default()).unwrap();
        assert_eq!(k, k.transpose());
        let eig = k.symmetric_eigenvalues();
        let max = eig.amax();
        assert!(eig.iter().all(|&e| e > -1e-12 * max));
        assert_eq!(eig.iter().filter(|&&e| e.abs() < 1e-10 * max).count(), 6);
    }

    #[test]
    fn degenerate_rejected() {
        let mut p = unit();
        p[3] = Point3::new(0.5, 0.5, 0.0);
        assert!(element_stiffness(&p, &Material::default()).is_err());
    }
}
