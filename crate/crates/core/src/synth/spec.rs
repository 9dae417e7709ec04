use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{make_beam_mesh, TetMesh};

/// Solver force units (kPa·mm²) per newton.
pub const KPA_MM2_PER_NEWTON: f64 = 1000.0;

/// Parameters of the synthetic deformation protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub preset: String,
    /// Inclusive range of applied forces per case.
    pub force_count: (usize, usize),
    /// Upper bound of each force magnitude, N.
    pub max_force: f64,
    /// Multiplier on `max_force · KPA_MM2_PER_NEWTON`; calibrates the linear
    /// model to the target displacement band.
    pub force_scale: f64,
    pub force_radius: (f64, f64),
    pub fixed_bc_radius: (f64, f64),
    /// Cloud noise bound, mm.
    pub max_perturbation: f64,
    pub young_range: (f64, f64),
    pub poisson: f64,
    /// Fraction of boundary vertices visible.
    pub visibility: (f64, f64),
    /// Beam standing in for the organ: cells per axis and spacing (mm).
    pub beam_cells: (usize, usize, usize),
    pub beam_spacing: f64,
    /// When set, forces are rescaled per case so the largest surface
    /// displacement lands inside this band (mm).
    pub displacement_band: Option<(f64, f64)>,
}

pub const PRESETS: [&str; 3] = ["liver-beam", "kidney-beam", "prostate-beam"];

impl SynthSpec {
    /// `liver-beam`, `kidney-beam` or `prostate-beam` (the `-beam` suffix is
    /// optional).
    pub fn preset(name: &str) -> Result<Self> {
        let base = name.strip_suffix("-beam").unwrap_or(name);
        let spec = match base {
            "liver" => SynthSpec {
                preset: "liver-beam".into(),
                force_count: (1, 3),
                max_force: 1.5,
                force_scale: 0.15,
                force_radius: (10.0, 150.0),
                fixed_bc_radius: (25.0, 75.0),
                max_perturbation: 8.0,
                young_range: (2.0, 5.0),
                poisson: 0.35,
                visibility: (0.3, 0.5),
                beam_cells: (20, 10, 8),
                beam_spacing: 8.0,
                displacement_band: Some((5.0, 30.0)),
            },
            "kidney" => SynthSpec {
                preset: "kidney-beam".into(),
                force_count: (1, 3),
                max_force: 1.0,
                force_scale: 0.05,
                force_radius: (8.0, 50.0),
                fixed_bc_radius: (15.0, 40.0),
                max_perturbation: 5.0,
                young_range: (2.0, 5.0),
                poisson: 0.35,
                visibility: (0.3, 0.5),
                beam_cells: (11, 6, 5),
                beam_spacing: 10.0,
                displacement_band: Some((3.0, 20.0)),
            },
            "prostate" => SynthSpec {
                preset: "prostate-beam".into(),
                force_count: (1, 2),
                max_force: 0.3,
                force_scale: 0.03,
                force_radius: (2.0, 5.0),
                fixed_bc_radius: (5.0, 25.0),
                max_perturbation: 1.0,
                young_range: (2.0, 5.0),
                poisson: 0.35,
                visibility: (0.3, 0.5),
                beam_cells: (7, 6, 6),
                beam_spacing: 5.0,
                displacement_band: Some((1.0, 8.0)),
            },
            _ => return Err(Error::InvalidInput(format!("unknown preset '{name}', expected one of {PRESETS:?}"))),
        };
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let range = |(a, b): (f64, f64), what: &str, lo: f64| {
            if a.is_finite() && b.is_finite() && lo <= a && a <= b {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("invalid {what} range ({a}, {b})")))
            }
        };
        if self.force_count.0 > self.force_count.1 {
            return Err(Error::InvalidInput("force_count range is reversed".into()));
        }
        if !(self.max_force >= 0.0 && self.force_scale >= 0.0 && self.max_perturbation >= 0.0) {
            return Err(Error::InvalidInput("force and perturbation bounds must be nonnegative".into()));
        }
        range(self.force_radius, "force radius", 0.0)?;
        range(self.fixed_bc_radius, "fixed BC radius", 0.0)?;
        range(self.young_range, "Young's modulus", f64::MIN_POSITIVE)?;
        range(self.visibility, "visibility", 0.0)?;
        if self.visibility.1 > 1.0 || self.visibility.1 <= 0.0 {
            return Err(Error::InvalidInput("visibility must lie in (0, 1]".into()));
        }
        if let Some(b) = self.displacement_band {
            range(b, "displacement band", f64::MIN_POSITIVE)?;
        }
        if !(0.0..0.5).contains(&self.poisson) {
            return Err(Error::InvalidInput("Poisson ratio must lie in [0, 0.5)".into()));
        }
        Ok(())
    }

    /// Newtons to solver force units.
    pub fn newtons_to_solver(&self, newtons: f64) -> f64 {
        newtons * KPA_MM2_PER_NEWTON * self.force_scale
    }

    pub fn mesh(&self) -> Result<TetMesh> {
        let (x, y, z) = self.beam_cells;
        make_beam_mesh(x, y, z, self.beam_spacing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_valid() {
        for p in PRESETS {
            let s = SynthSpec::preset(p).unwrap();
            s.validate().unwrap();
            assert_eq!(s.preset, p);
            assert!(s.mesh().unwrap().boundary_count > 0);
        }
        let l = SynthSpec::preset("liver").unwrap();
        assert_eq!((l.force_count, l.max_force, l.max_perturbation), ((1, 3), 1.5, 8.0));
        assert_eq!((l.force_radius, l.fixed_bc_radius), ((10.0, 150.0), (25.0, 75.0)));
        assert!(SynthSpec::preset("spleen").is_err());
    }
}
