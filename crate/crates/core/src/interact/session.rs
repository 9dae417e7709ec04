use nalgebra::Rotation3;
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Instant;

use super::prompt::{expand_prompt, Prompt, PromptRegion};
use crate::correspond::{icp_rigid, mutual_nn, CorrespondenceSet, RigidTransform};
use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, Material, SparseSymMatrix};
use crate::geom::{median_nn_spacing, Point3, TetMesh, Vec3};
use crate::pbm::{register, Diagnostics, PipelineConfig, PipelineInput, RegistrationMode};
use crate::pyramid::TraceRow;

const ICP_MAX_ITER: usize = 50;
const ICP_TOL: f64 = 1e-9;

/// Immutable inputs shared by a session and its replays.
#[derive(Debug, Clone)]
pub struct SessionAssets {
    pub mesh: Arc<TetMesh>,
    pub material: Material,
    pub cloud: Arc<Vec<Point3>>,
}

impl SessionAssets {
    pub fn new(mesh: TetMesh, material: Material, cloud: Vec<Point3>) -> Self {
        SessionAssets {
            mesh: Arc::new(mesh),
            material,
            cloud: Arc::new(cloud),
        }
    }
}

/// One entry of the linear session history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HistoryEntry {
    /// Full registration from the current state with the current pairs.
    Register {
        mode: RegistrationMode,
    },
    Prompt {
        prompt: Prompt,
    },
}

/// What a prompt did, for reporting and latency accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptOutcome {
    pub revision: u64,
    pub region: PromptRegion,
    pub icp: RigidTransform,
    pub icp_rms: f64,
    /// ICP could not run on the polylines (collinear) and the line-to-line
    /// fallback was used.
    pub icp_fallback: bool,
    pub new_pairs: Vec<(usize, usize)>,
    /// Largest nodal increment, mm.
    pub max_increment: f64,
    pub preprocess_seconds: f64,
    pub solve_seconds: f64,
    pub total_seconds: f64,
    pub diagnostics: Diagnostics,
}

/// Interactive registration state. `deformed` is always `nodes + u`.
#[derive(Debug, Clone)]
pub struct Session {
    assets: SessionAssets,
    stiffness: Arc<SparseSymMatrix>,
    config: PipelineConfig,
    spacing: f64,
    initial_corr: CorrespondenceSet,
    corr: CorrespondenceSet,
    u: Vec<f64>,
    deformed: Vec<Point3>,
    history: Vec<HistoryEntry>,
    revision: u64,
}

/// Rigid map between two polylines. Falls back to aligning centroids and
/// principal directions when ICP is degenerate (straight strokes).
pub fn align_polylines(model: &[Point3], cloud: &[Point3]) -> Result<(RigidTransform, f64, bool)> {
    match icp_rigid(model, cloud, ICP_MAX_ITER, ICP_TOL) {
        Ok(r) => Ok((r.transform, r.rms, false)),
        Err(Error::Degenerate(_)) => {
            let t = line_to_line(model, cloud);
            let tree = crate::geom::KdTree::new(cloud);
            let sq: f64 = model.iter().map(|p| tree.nearest(&t.apply(p)).map_or(0.0, |(_, d2)| d2)).sum();
            Ok((t, (sq / model.len() as f64).sqrt(), true))
        }
        Err(e) => Err(e),
    }
}

fn centroid(p: &[Point3]) -> Point3 {
    Point3::from(p.iter().fold(Vec3::zeros(), |a, q| a + q.coords) / p.len() as f64)
}

fn direction(p: &[Point3]) -> Option<Vec3> {
    let d = p.last()? - p.first()?;
    (d.norm() > 0.0).then(|| d.normalize())
}

fn line_to_line(model: &[Point3], cloud: &[Point3]) -> RigidTransform {
    let (cm, cc) = (centroid(model), centroid(cloud));
    let rot = match (direction(model), direction(cloud)) {
        (Some(a), Some(b)) => {
            let b = if a.dot(&b) < 0.0 { -b } else { b };
            Rotation3::rotation_between(&a, &b).unwrap_or_else(Rotation3::identity)
        }
        _ => Rotation3::identity(),
    };
    RigidTransform::new(rot, cc.coords - rot * cm.coords)
}

impl Session {
    /// Starts at revision 0 with zero displacement.
    pub fn new(assets: SessionAssets, corr: CorrespondenceSet, config: PipelineConfig) -> Result<Self> {
        let stiffness = Arc::new(assemble_stiffness(&assets.mesh, &assets.material)?);
        Self::with_stiffness(assets, stiffness, corr, config)
    }

    /// Like [`Session::new`] with a stiffness matrix already assembled for
    /// `assets`.
    pub fn with_stiffness(assets: SessionAssets, stiffness: Arc<SparseSymMatrix>, corr: CorrespondenceSet, config: PipelineConfig) -> Result<Self> {
        let n = assets.mesh.boundary_count;
        if corr.source_count() != n || corr.target_count() != assets.cloud.len() {
            return Err(Error::InvalidInput(format!(
                "correspondences are {}×{}, session needs {}×{}",
                corr.source_count(),
                corr.target_count(),
                n,
                assets.cloud.len()
            )));
        }
        if stiffness.dim() != 3 * assets.mesh.node_count() {
            return Err(Error::LengthMismatch {
                expected: 3 * assets.mesh.node_count(),
                actual: stiffness.dim(),
            });
        }
        if assets.cloud.len() < 2 {
            return Err(Error::InvalidInput("cloud needs at least 2 points".into()));
        }
        let spacing = median_nn_spacing(&assets.cloud);
        if !(spacing > 0.0) {
            return Err(Error::Degenerate("cloud points coincide".into()));
        }
        Ok(Session {
            deformed: assets.mesh.nodes.clone(),
            u: vec![0.0; 3 * assets.mesh.node_count()],
            stiffness,
            config,
            spacing,
            initial_corr: corr.clone(),
            corr,
            history: Vec::new(),
            revision: 0,
            assets,
        })
    }

    pub fn assets(&self) -> &SessionAssets {
        &self.assets
    }

    pub fn stiffness(&self) -> &Arc<SparseSymMatrix> {
        &self.stiffness
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn correspondences(&self) -> &CorrespondenceSet {
        &self.corr
    }

    pub fn initial_correspondences(&self) -> &CorrespondenceSet {
        &self.initial_corr
    }

    /// Cumulative volumetric displacement, `3 n_v` mm.
    pub fn displacement(&self) -> &[f64] {
        &self.u
    }

    /// Current deformed nodes; the first `boundary_count` form the surface.
    pub fn deformed_nodes(&self) -> &[Point3] {
        &self.deformed
    }

    pub fn deformed_surface(&self) -> &[Point3] {
        &self.deformed[..self.assets.mesh.boundary_count]
    }

    /// Median nearest-neighbour spacing of the cloud; prompt resampling step.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Adds `du` to the cumulative field and recomputes the deformed nodes
    /// from the rest shape, so `deformed == nodes + u` holds exactly.
    fn accumulate(&mut self, du: &[f64]) {
        for (a, d) in self.u.iter_mut().zip(du) {
            *a += d;
        }
        self.deformed = self.assets.mesh.displaced_nodes(&self.u).expect("field sized to the mesh");
        self.revision += 1;
    }

    fn solve_increment(
        &self,
        mode: RegistrationMode,
        cfg: &PipelineConfig,
        progress: Option<&mut dyn FnMut(&TraceRow)>,
    ) -> Result<crate::pbm::Registration> {
        let input = PipelineInput {
            nodes: &self.deformed,
            boundary_count: self.assets.mesh.boundary_count,
            stiffness: &self.stiffness,
            y: &self.assets.cloud,
            corr: &self.corr,
        };
        register(&input, mode, cfg, progress)
    }

    /// Runs a full registration from the current state and records it.
    pub fn register(&mut self, mode: RegistrationMode) -> Result<Diagnostics> {
        self.register_with_progress(mode, None)
    }

    pub fn register_with_progress(&mut self, mode: RegistrationMode, progress: Option<&mut dyn FnMut(&TraceRow)>) -> Result<Diagnostics> {
        let r = self.solve_increment(mode, &self.config, progress)?;
        self.accumulate(&r.u);
        self.history.push(HistoryEntry::Register { mode });
        Ok(r.diagnostics)
    }

    /// Pipeline settings for prompt refinement: the session config with the
    /// per-level step budget halved.
    pub fn refine_config(&self) -> PipelineConfig {
        let mut cfg = self.config.clone();
        cfg.pyramid.steps_per_level = (cfg.pyramid.steps_per_level / 2).max(1);
        cfg
    }

    /// Expands a prompt against the current deformed surface.
    pub fn expand(&self, prompt: &Prompt) -> Result<PromptRegion> {
        expand_prompt(prompt, self.deformed_surface(), &self.assets.cloud, self.spacing)
    }

    /// Applies one line prompt: local rigid alignment, correspondence
    /// override inside the prompted region, then a refined solve from the
    /// current deformed state. State is unchanged on error.
    pub fn apply_prompt(&mut self, prompt: &Prompt) -> Result<PromptOutcome> {
        self.apply_prompt_with_progress(prompt, None)
    }

    /// As [`Session::apply_prompt`], reporting every optimizer trace row.
    pub fn apply_prompt_with_progress(&mut self, prompt: &Prompt, progress: Option<&mut dyn FnMut(&TraceRow)>) -> Result<PromptOutcome> {
        let start = Instant::now();
        let region = self.expand(prompt)?;
        let (icp, icp_rms, icp_fallback) = align_polylines(&region.model_samples, &region.cloud_samples)?;
        let surface = self.deformed_surface();
        let xs: Vec<Point3> = region.x_m.iter().map(|&i| surface[i]).collect();
        let ys: Vec<Point3> = region.y_m.iter().map(|&j| self.assets.cloud[j]).collect();
        let local = mutual_nn(&xs, &ys, &icp, f64::INFINITY)?;
        let new_pairs: Vec<(usize, usize)> = local.pairs().iter().map(|&(a, b)| (region.x_m[a], region.y_m[b])).collect();
        let corr = self.corr.override_rows(&region.x_m, &new_pairs)?;
        if corr.is_empty() {
            return Err(Error::InvalidInput("prompt left no correspondences".into()));
        }
        let preprocess_seconds = start.elapsed().as_secs_f64();

        let previous = std::mem::replace(&mut self.corr, corr);
        let solve_start = Instant::now();
        let r = match self.solve_increment(RegistrationMode::BiompinnPbm, &self.refine_config(), progress) {
            Ok(r) => r,
            Err(e) => {
                self.corr = previous;
                return Err(e);
            }
        };
        let solve_seconds = solve_start.elapsed().as_secs_f64();
        let max_increment = r.u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        self.accumulate(&r.u);
        self.history.push(HistoryEntry::Prompt { prompt: prompt.clone() });
        Ok(PromptOutcome {
            revision: self.revision,
            region,
            icp,
            icp_rms,
            icp_fallback,
            new_pairs,
            max_increment,
            preprocess_seconds,
            solve_seconds,
            total_seconds: start.elapsed().as_secs_f64(),
            diagnostics: r.diagnostics,
        })
    }

    /// Re-runs `history` on a fresh session built from the same assets,
    /// initial pairs and config.
    pub fn replay(&self, history: &[HistoryEntry]) -> Result<Session> {
        let mut s = Session::with_stiffness(
            self.assets.clone(),
            self.stiffness.clone(),
            self.initial_corr.clone(),
            self.config.clone(),
        )?;
        s.apply_history(history)?;
        Ok(s)
    }

    pub(crate) fn apply_history(&mut self, history: &[HistoryEntry]) -> Result<()> {
        for entry in history {
            match entry {
                HistoryEntry::Register { mode } => {
                    self.register(*mode)?;
                }
                HistoryEntry::Prompt { prompt } => {
                    self.apply_prompt(prompt)?;
                }
            }
        }
        Ok(())
    }

    /// Overwrites the mutable state; used by restore.
    pub(crate) fn set_state(&mut self, u: Vec<f64>, corr: CorrespondenceSet, history: Vec<HistoryEntry>, revision: u64) -> Result<()> {
        if u.len() != self.u.len() {
            return Err(Error::LengthMismatch {
                expected: self.u.len(),
                actual: u.len(),
            });
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("snapshot displacement".into()));
        }
        self.deformed = self.assets.mesh.displaced_nodes(&u)?;
        self.u = u;
        self.corr = corr;
        self.history = history;
        self.revision = revision;
        Ok(())
    }
}
