use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use super::adam::Adam;
use super::config::PyramidConfig;
use super::encode::NormFrame;
use super::level::{LevelProblem, LevelSpec, LossTerms};
use super::mlp::MlpParams;
use crate::correspond::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::fem::SparseSymMatrix;
use crate::geom::io::write;
use crate::geom::Point3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    /// 1-based level.
    pub level: usize,
    /// Step index; `steps_per_level` marks the evaluation after the last
    /// update.
    pub step: usize,
    pub terms: LossTerms,
}

pub struct PyramidInput<'a> {
    /// Boundary points, mm. Row `i` is boundary node `i` of the mesh.
    pub x: &'a [Point3],
    pub y: &'a [Point3],
    pub corr: &'a CorrespondenceSet,
    /// Full volumetric stiffness; `None` drops the strain-energy term.
    pub stiffness: Option<&'a SparseSymMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidResult {
    /// Total boundary displacement, node-major `3n` mm.
    pub u: Vec<f64>,
    pub deformed: Vec<Point3>,
    /// Per-level increments, each `3n`; they sum to `u`.
    pub increments: Vec<Vec<f64>>,
    pub trace: Vec<TraceRow>,
    pub networks: Vec<MlpParams>,
    pub frame: NormFrame,
}

fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).flat_map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]]).collect()
}

/// Coarse-to-fine optimization of the deformation pyramid. Each level trains
/// a fresh MLP with all earlier levels frozen.
pub fn optimize(input: &PyramidInput<'_>, cfg: &PyramidConfig, mut progress: Option<&mut dyn FnMut(&TraceRow)>) -> Result<PyramidResult> {
    cfg.validate()?;
    input.corr.check_clouds(input.x, input.y)?;
    if input.corr.is_empty() {
        return Err(Error::InvalidInput("pyramid optimization needs correspondences".into()));
    }
    let n = input.x.len();
    let frame = NormFrame::fit([input.x, input.y])?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut u = DMatrix::zeros(n, 3);
    let mut increments = Vec::with_capacity(cfg.levels);
    let mut networks = Vec::with_capacity(cfg.levels);
    let mut trace = Vec::with_capacity(cfg.levels * (cfg.steps_per_level + 1));
    let mut emit = |row: TraceRow, trace: &mut Vec<TraceRow>| {
        if let Some(cb) = progress.as_mut() {
            cb(&row);
        }
        trace.push(row);
    };

    for level in 1..=cfg.levels {
        let problem = LevelProblem::new(LevelSpec {
            level,
            x: input.x,
            u_prev: &u,
            y: input.y,
            corr: input.corr,
            stiffness: input.stiffness,
            frame,
            lambda1: cfg.lambda1,
            lambda2: if input.stiffness.is_some() { cfg.lambda2 } else { 0.0 },
            alpha: cfg.alpha(level),
        })?;
        let mut params = MlpParams::init(cfg.mlp_depth, cfg.mlp_width, &mut rng);
        let mut adam = Adam::new(cfg.lr, &params.mats);
        for step in 0..cfg.steps_per_level {
            let (terms, grads) = problem.evaluate(&params).map_err(|_| Error::Diverged { level, step })?;
            emit(TraceRow { level, step, terms }, &mut trace);
            adam.step(&mut params.mats, &grads);
            if !params.is_finite() {
                return Err(Error::Diverged { level, step });
            }
        }
        let (terms, _) = problem.evaluate(&params).map_err(|_| Error::Diverged {
            level,
            step: cfg.steps_per_level,
        })?;
        emit(
            TraceRow {
                level,
                step: cfg.steps_per_level,
                terms,
            },
            &mut trace,
        );
        let du = problem.increment(&params)?;
        u += &du;
        increments.push(flat(&du));
        networks.push(params);
    }
    let deformed = (0..n).map(|i| input.x[i] + u.row(i).transpose()).collect();
    Ok(PyramidResult {
        u: flat(&u),
        deformed,
        increments,
        trace,
        networks,
        frame,
    })
}

pub fn trace_csv(trace: &[TraceRow]) -> String {
    let mut s = String::from("level,step,L_align,L_rigid,L_fem,total\n");
    for r in trace {
        let t = r.terms;
        writeln!(s, "{},{},{},{},{},{}", r.level, r.step, t.align, t.rigid, t.fem, t.total).unwrap();
    }
    s
}

pub fn save_trace_csv(trace: &[TraceRow], path: &Path) -> Result<()> {
    write(path, &trace_csv(trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_stiffness, Material};
    use crate::geom::{make_beam_mesh, Vec3};

    fn small_cfg() -> PyramidConfig {
        PyramidConfig {
            mlp_width: 16,
            mlp_depth: 2,
            steps_per_level: 30,
            ..Default::default()
        }
    }

    #[test]
    fn identity_case_barely_moves() {
        let mesh = make_beam_mesh(3, 2, 2, 10.0).unwrap();
        let x = mesh.boundary_nodes();
        let corr = CorrespondenceSet::identity(x.len());
        let k = assemble_stiffness(&mesh, &Material::default()).unwrap();
        let r = optimize(
            &PyramidInput {
                x,
                y: x,
                corr: &corr,
                stiffness: Some(&k),
            },
            &small_cfg(),
            None,
        )
        .unwrap();
        assert!(r.u.iter().all(|v| v.abs() <= 0.1), "{}", r.u.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }

    #[test]
    fn bookkeeping_and_determinism() {
        let mesh = make_beam_mesh(3, 2, 2, 10.0).unwrap();
        let x = mesh.boundary_nodes();
        let y: Vec<Point3> = x.iter().map(|p| p + Vec3::new(2.0, 0.0, 0.5 * p.x / 30.0)).collect();
        let corr = CorrespondenceSet::identity(x.len());
        let input = PyramidInput {
            x,
            y: &y,
            corr: &corr,
            stiffness: None,
        };
        let mut seen = 0;
        let mut cb = |_: &TraceRow| seen += 1;
        let a = optimize(&input, &small_cfg(), Some(&mut cb)).unwrap();
        assert_eq!(seen, 4 * 31);
        let b = optimize(&input, &small_cfg(), None).unwrap();
        assert_eq!(a, b);
        let mut sum = vec![0.0; a.u.len()];
        for inc in &a.increments {
            sum.iter_mut().zip(inc).for_each(|(s, d)| *s += d);
        }
        assert_eq!(sum, a.u);
        let first = a.trace[0].terms.align;
        let last = a.trace.last().unwrap().terms.align;
        assert!(last < first);
        let csv = trace_csv(&a.trace);
        assert!(csv.starts_with("level,step,L_align,L_rigid,L_fem,total\n1,0,"));
        assert_eq!(csv.lines().count(), 1 + a.trace.len());
    }

    #[test]
    fn rejects_empty_correspondences() {
        let x = [Point3::origin(), Point3::new(1.0, 1.0, 1.0)];
        let corr = CorrespondenceSet::empty(2, 2);
        let input = PyramidInput {
            x: &x,
            y: &x,
            corr: &corr,
            stiffness: None,
        };
        assert!(optimize(&input, &small_cfg(), None).is_err());
    }
}
