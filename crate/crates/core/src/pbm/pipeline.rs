use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use super::system::{solve_pbm, PbmConfig, PbmProblem};
use crate::correspond::{CorrespondenceSet, RigidTransform};
use crate::error::{Error, Result};
use crate::fem::{solve_forward, BcSpec, SparseSymMatrix};
use crate::geom::{Point3, Vec3};
use crate::pyramid::{optimize, PyramidConfig, PyramidInput, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegistrationMode {
    /// Best rigid fit of the correspondences.
    Rigid,
    /// Pyramid without the strain-energy term.
    Nofem,
    /// Pyramid with the strain-energy term.
    Biompinn,
    /// Pyramid followed by the one-pass regularized solve.
    BiompinnPbm,
}

impl RegistrationMode {
    pub const ALL: [RegistrationMode; 4] = [Self::Rigid, Self::Nofem, Self::Biompinn, Self::BiompinnPbm];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rigid => "rigid",
            Self::Nofem => "nofem",
            Self::Biompinn => "biompinn",
            Self::BiompinnPbm => "biompinn-pbm",
        }
    }
}

impl fmt::Display for RegistrationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegistrationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown registration mode '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub pyramid: PyramidConfig,
    pub pbm: PbmConfig,
    /// Fit a rigid transform to the correspondences first and register the
    /// non-rigid remainder in the model frame.
    pub rigid_prealign: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            pyramid: PyramidConfig::default(),
            pbm: PbmConfig::default(),
            rigid_prealign: true,
        }
    }
}

#[derive(Clone, Copy)]
pub struct PipelineInput<'a> {
    /// Current node positions; the field is computed relative to these.
    pub nodes: &'a [Point3],
    pub boundary_count: usize,
    pub stiffness: &'a SparseSymMatrix,
    pub y: &'a [Point3],
    pub corr: &'a CorrespondenceSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub mode: RegistrationMode,
    pub sigma2: Option<f64>,
    pub pyramid_seconds: f64,
    pub solve_seconds: f64,
    pub total_seconds: f64,
    pub cg_iterations: usize,
    pub cg_converged: bool,
    pub energy_init: Option<f64>,
    pub energy_final: Option<f64>,
    /// Rigid stage, when one ran.
    pub prealign: Option<RigidTransform>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    /// Volumetric displacement, `3 n_v` mm.
    pub u: Vec<f64>,
    /// Boundary field produced by the pyramid, when one ran (`3n`).
    pub surface_u: Option<Vec<f64>>,
    pub diagnostics: Diagnostics,
}

impl Registration {
    pub fn deformed_boundary(&self, input: &PipelineInput<'_>) -> Vec<Point3> {
        (0..input.boundary_count)
            .map(|i| input.nodes[i] + Vec3::new(self.u[3 * i], self.u[3 * i + 1], self.u[3 * i + 2]))
            .collect()
    }
}

/// Extends a boundary field into the volume by a forward solve with every
/// boundary node prescribed.
pub fn extend_to_volume(input: &PipelineInput<'_>, surface_u: &[f64], cfg: &PbmConfig) -> Result<(Vec<f64>, usize, bool)> {
    let n = input.boundary_count;
    if surface_u.len() != 3 * n {
        return Err(Error::LengthMismatch {
            expected: 3 * n,
            actual: surface_u.len(),
        });
    }
    let mut bc = BcSpec::new();
    for i in 0..n {
        bc.fix(i, Vec3::new(surface_u[3 * i], surface_u[3 * i + 1], surface_u[3 * i + 2]));
    }
    let out = solve_forward(input.stiffness, &bc, &cfg.cg_options(input.nodes.len()))?;
    Ok((out.x, out.iterations, out.converged))
}

/// `u_i = T(x_i + v_i) − x_i`: a model-frame field followed by `T`.
fn compose(t: &RigidTransform, nodes: &[Point3], v: &[f64]) -> Vec<f64> {
    nodes
        .iter()
        .enumerate()
        .flat_map(|(i, p)| {
            let q = t.apply(&(p + Vec3::new(v[3 * i], v[3 * i + 1], v[3 * i + 2])));
            (q - p).data.0[0]
        })
        .collect()
}

pub fn register(
    input: &PipelineInput<'_>,
    mode: RegistrationMode,
    cfg: &PipelineConfig,
    progress: Option<&mut dyn FnMut(&TraceRow)>,
) -> Result<Registration> {
    PbmProblem {
        nodes: input.nodes,
        boundary_count: input.boundary_count,
        stiffness: input.stiffness,
        y: input.y,
        corr: input.corr,
    }
    .validate()?;
    let start = Instant::now();
    let boundary = &input.nodes[..input.boundary_count];
    let mut diag = Diagnostics {
        mode,
        sigma2: None,
        pyramid_seconds: 0.0,
        solve_seconds: 0.0,
        total_seconds: 0.0,
        cg_iterations: 0,
        cg_converged: true,
        energy_init: None,
        energy_final: None,
        prealign: None,
        trace: Vec::new(),
    };

    let t = if mode == RegistrationMode::Rigid || cfg.rigid_prealign {
        let (src, dst): (Vec<Point3>, Vec<Point3>) = input.corr.pairs().iter().map(|&(i, j)| (boundary[i], input.y[j])).unzip();
        let t = RigidTransform::fit(&src, &dst)?;
        diag.prealign = Some(t);
        t
    } else {
        RigidTransform::identity()
    };
    if mode == RegistrationMode::Rigid {
        let u = compose(&t, input.nodes, &vec![0.0; 3 * input.nodes.len()]);
        diag.total_seconds = start.elapsed().as_secs_f64();
        return Ok(Registration {
            u,
            surface_u: None,
            diagnostics: diag,
        });
    }

    // Everything below runs in the model frame, where K is valid.
    let inv = t.inverse();
    let y_local = inv.apply_all(input.y);
    let local = PipelineInput { y: &y_local, ..*input };
    let problem = PbmProblem {
        nodes: input.nodes,
        boundary_count: input.boundary_count,
        stiffness: input.stiffness,
        y: &y_local,
        corr: input.corr,
    };
    let pyr = optimize(
        &PyramidInput {
            x: boundary,
            y: &y_local,
            corr: input.corr,
            stiffness: (mode != RegistrationMode::Nofem).then_some(input.stiffness),
        },
        &cfg.pyramid,
        progress,
    )?;
    diag.pyramid_seconds = start.elapsed().as_secs_f64();
    diag.trace = pyr.trace;
    let solve_start = Instant::now();
    let v = if mode == RegistrationMode::BiompinnPbm {
        let mut u_init = pyr.u.clone();
        u_init.resize(3 * input.nodes.len(), 0.0);
        let s = solve_pbm(&problem, &u_init, &cfg.pbm)?;
        diag.sigma2 = Some(s.sigma2);
        diag.cg_iterations = s.cg_iterations;
        diag.cg_converged = s.converged;
        diag.energy_init = Some(s.energy_init);
        diag.energy_final = Some(s.energy_final);
        s.u
    } else {
        let (u, it, conv) = extend_to_volume(&local, &pyr.u, &cfg.pbm)?;
        diag.cg_iterations = it;
        diag.cg_converged = conv;
        u
    };
    diag.solve_seconds = solve_start.elapsed().as_secs_f64();
    diag.total_seconds = start.elapsed().as_secs_f64();
    Ok(Registration {
        u: compose(&t, input.nodes, &v),
        surface_u: Some(compose(&t, boundary, &pyr.u)),
        diagnostics: diag,
    })
}
