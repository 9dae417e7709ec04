use nalgebra::DMatrix;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geom::{Point3, Vec3};

/// Half-width of the normalized box. At a quarter, the coarsest encoding
/// `4πx` stays within one period, so it is injective along each axis.
pub const NORMALIZED_HALF_WIDTH: f64 = 0.25;

/// Isotropic map of a bounding box onto `[−h, h]³`, `h = NORMALIZED_HALF_WIDTH`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormFrame {
    pub center: Point3,
    /// Half the longest side of the box, in mm.
    pub half_extent: f64,
}

impl NormFrame {
    /// Frame of the joint bounding box of the given point sets.
    pub fn fit<'p>(sets: impl IntoIterator<Item = &'p [Point3]>) -> Result<Self> {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for p in sets.into_iter().flatten() {
            lo = lo.inf(&p.coords);
            hi = hi.sup(&p.coords);
        }
        let half_extent = 0.5 * (hi - lo).max();
        if !(half_extent > 0.0) || !half_extent.is_finite() {
            return Err(Error::Degenerate("point sets have no spatial extent".into()));
        }
        Ok(NormFrame {
            center: Point3::from(0.5 * (lo + hi)),
            half_extent,
        })
    }

    /// Millimetres per normalized unit.
    pub fn scale(&self) -> f64 {
        self.half_extent / NORMALIZED_HALF_WIDTH
    }

    pub fn to_normalized(&self, p: &Point3) -> Point3 {
        Point3::from((p - self.center) / self.scale())
    }
}

/// `[sin(4ˡπx), cos(4ˡπx)]` for one point.
pub fn encode(x: &Point3, level: usize) -> [f64; 6] {
    let f = 4f64.powi(level as i32) * PI;
    let (s, c): (Vec<f64>, Vec<f64>) = x.iter().map(|v| (f * v).sin_cos()).unzip();
    [s[0], s[1], s[2], c[0], c[1], c[2]]
}

/// Encodings of many points as an `n × 6` matrix.
pub fn encode_all(xs: &[Point3], level: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(xs.len(), 6);
    for (i, x) in xs.iter().enumerate() {
        for (c, v) in encode(x, level).into_iter().enumerate() {
            m[(i, c)] = v;
        }
    }
    m
}
