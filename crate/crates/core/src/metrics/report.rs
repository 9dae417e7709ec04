use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::{chamfer_terms, jacobian_report, mean_std, tre_by_geodesic, GeodesicBin, JacobianReport, MeanStd};
use crate::error::{Error, Result};
use crate::fem::jacobian_determinants;
use crate::geom::geodesic_distance;
use crate::geom::io::write;
use crate::synth::SynthCase;

pub const DEFAULT_BIN_WIDTH: f64 = 0.2;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Runtimes {
    pub pyramid_seconds: f64,
    pub solve_seconds: f64,
    pub total_seconds: f64,
}

/// Raw per-sample arrays every statistic in [`EvalReport`] derives from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEval {
    /// Error per boundary node (mm).
    pub surface_errors: Vec<f64>,
    /// Normalized geodesic distance of each boundary node from the observed region.
    pub geodesic: Vec<f64>,
    /// Error per mesh node (mm).
    pub volume_errors: Vec<f64>,
    /// Squared nearest-neighbour distance per cloud point (mm²).
    pub chamfer_terms: Vec<f64>,
    pub jacobians: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub surface_tre: MeanStd,
    pub volume_tre: MeanStd,
    /// One-sided Chamfer distance, mm².
    pub chamfer: f64,
    pub bin_width: f64,
    pub geodesic_bins: Vec<GeodesicBin>,
    pub jacobian: JacobianReport,
    pub runtimes: Runtimes,
    pub raw: RawEval,
}

impl EvalReport {
    pub fn from_raw(mode: &str, raw: RawEval, bin_width: f64, runtimes: Runtimes) -> Result<Self> {
        if raw.chamfer_terms.is_empty() {
            return Err(Error::InvalidInput("no chamfer samples".into()));
        }
        Ok(EvalReport {
            mode: mode.to_string(),
            surface_tre: mean_std(&raw.surface_errors)?,
            volume_tre: mean_std(&raw.volume_errors)?,
            chamfer: raw.chamfer_terms.iter().sum::<f64>() / raw.chamfer_terms.len() as f64,
            bin_width,
            geodesic_bins: tre_by_geodesic(&raw.surface_errors, &raw.geodesic, bin_width)?,
            jacobian: jacobian_report(&raw.jacobians)?,
            runtimes,
            raw,
        })
    }

    /// Mean surface error over all bins with index ≥ 1.
    pub fn unobserved_mean(&self) -> Option<f64> {
        let (s, n) = self
            .raw
            .surface_errors
            .iter()
            .zip(&self.raw.geodesic)
            .filter(|(_, &d)| d > 0.0)
            .fold((0.0, 0usize), |(s, n), (e, _)| (s + e, n + 1));
        (n > 0).then(|| s / n as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            context: "evaluation report".into(),
            source: e,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Json {
            context: "evaluation report".into(),
            source: e,
        })
    }

    /// `node,error,geodesic` rows for the boundary nodes.
    pub fn errors_csv(&self) -> String {
        let mut s = String::from("node,error,geodesic\n");
        for (i, (e, d)) in self.raw.surface_errors.iter().zip(&self.raw.geodesic).enumerate() {
            s += &format!("{i},{e},{d}\n");
        }
        s
    }

    /// Writes `report.json`, `errors.csv` and `jacobian_histogram.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write(&dir.join("report.json"), &self.to_json()?)?;
        write(&dir.join("errors.csv"), &self.errors_csv())?;
        write(&dir.join("jacobian_histogram.csv"), &self.jacobian.histogram.to_csv())
    }
}

/// Raw arrays for an estimated volumetric field on a synthetic case.
pub fn evaluate_field(case: &SynthCase, u_est: &[f64]) -> Result<RawEval> {
    let mesh = &case.mesh;
    if u_est.len() != case.u_gt.len() {
        return Err(Error::LengthMismatch {
            expected: case.u_gt.len(),
            actual: u_est.len(),
        });
    }
    let volume_errors: Vec<f64> = u_est
        .chunks_exact(3)
        .zip(case.u_gt.chunks_exact(3))
        .map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt())
        .collect();
    let geodesic = geodesic_distance(&mesh.surface(), &case.observed_vertices())?.normalized();
    let deformed = mesh.displaced_nodes(u_est)?;
    Ok(RawEval {
        surface_errors: volume_errors[..mesh.boundary_count].to_vec(),
        geodesic,
        chamfer_terms: chamfer_terms(&case.cloud.points, &deformed[..mesh.boundary_count])?,
        jacobians: jacobian_determinants(mesh, u_est)?,
        volume_errors,
    })
}

pub fn evaluate_case(case: &SynthCase, u_est: &[f64], mode: &str, runtimes: Runtimes) -> Result<EvalReport> {
    EvalReport::from_raw(mode, evaluate_field(case, u_est)?, DEFAULT_BIN_WIDTH, runtimes)
}
