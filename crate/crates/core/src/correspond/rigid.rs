use nalgebra::{Matrix3, Rotation3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{KdTree, Point3, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Rotation3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Rotation3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vec3) -> Self {
        RigidTransform { rotation, translation }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn apply_all(&self, pts: &[Point3]) -> Vec<Point3> {
        pts.iter().map(|p| self.apply(p)).collect()
    }

    pub fn inverse(&self) -> Self {
        let r = self.rotation.inverse();
        RigidTransform {
            rotation: r,
            translation: -(r * self.translation),
        }
    }

    /// `self ∘ first`: applies `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> Self {
        RigidTransform {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    /// Least-squares rigid fit mapping `src[k]` onto `dst[k]` (orthogonal
    /// Procrustes with a reflection guard).
    pub fn fit(src: &[Point3], dst: &[Point3]) -> Result<Self> {
        if src.len() != dst.len() {
            return Err(Error::LengthMismatch {
                expected: src.len(),
                actual: dst.len(),
            });
        }
        check_spread(src)?;
        check_spread(dst)?;
        let cs = centroid(src);
        let cd = centroid(dst);
        let mut h = Matrix3::zeros();
        for (p, q) in src.iter().zip(dst) {
            h += (p - cs) * (q - cd).transpose();
        }
        let svd = h.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let v = vt.transpose();
        let d = (v * u.transpose()).determinant().signum();
        let r = v * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
        let rotation = Rotation3::from_matrix_unchecked(r);
        Ok(RigidTransform {
            rotation,
            translation: cd.coords - rotation * cs.coords,
        })
    }

    pub fn is_proper(&self, tol: f64) -> bool {
        let r = self.rotation.matrix();
        (r.transpose() * r - Matrix3::identity()).amax() <= tol && (r.determinant() - 1.0).abs() <= tol
    }
}

pub(crate) fn centroid(pts: &[Point3]) -> Point3 {
    Point3::from(pts.iter().map(|p| p.coords).sum::<Vec3>() / pts.len() as f64)
}

/// Rejects point sets that do not span a plane (fewer than three points,
/// coincident or collinear).
pub fn check_spread(pts: &[Point3]) -> Result<()> {
    if pts.len() < 3 {
        return Err(Error::Degenerate(format!("rigid fit needs at least 3 points, got {}", pts.len())));
    }
    let c = centroid(pts);
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p - c;
        cov += d * d.transpose();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    ev.sort_unstable_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= 1e-10 * ev[0] {
        return Err(Error::Degenerate("points are coincident or collinear".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    pub rms: f64,
    /// RMS after the nearest-neighbour step of each iteration.
    pub rms_history: Vec<f64>,
}

/// Point-to-point ICP from `src` onto `dst`, starting at identity.
pub fn icp_rigid(src: &[Point3], dst: &[Point3], max_iter: usize, tol: f64) -> Result<IcpResult> {
    check_spread(src)?;
    check_spread(dst)?;
    let tree = KdTree::new(dst);
    let mut current = RigidTransform::identity();
    let mut best = (f64::INFINITY, current);
    let mut history = Vec::new();
    let mut matched = Vec::with_capacity(src.len());
    for _ in 0..max_iter.max(1) {
        matched.clear();
        let mut sq = 0.0;
        for p in src {
            let (j, d2) = tree.nearest(&current.apply(p)).expect("non-empty tree");
            matched.push(dst[j]);
            sq += d2;
        }
        let rms = (sq / src.len() as f64).sqrt();
        history.push(rms);
        let improvement = best.0 - rms;
        if rms < best.0 {
            best = (rms, current);
        }
        if rms == 0.0 || improvement < tol {
            break;
        }
        current = match RigidTransform::fit(src, &matched) {
            Ok(t) => t,
            // All sources snapped onto a collinear subset of dst.
            Err(Error::Degenerate(_)) => break,
            Err(e) => return Err(e),
        };
    }
    Ok(IcpResult {
        transform: best.1,
        rms: best.0,
        rms_history: history,
    })
}
