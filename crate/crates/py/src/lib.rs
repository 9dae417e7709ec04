//! Python bindings. Builds the `tetreg` extension module.
//!
//! Points cross the boundary as lists of `[x, y, z]`, displacement fields
//! as flat lists of `3 n` floats, and structured results as dicts.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use tetreg::correspond::{default_radius, mutual_nn, CorrespondenceSet, RigidTransform};
use tetreg::fem::{assemble_stiffness, jacobian_determinants, strain_energy, Material};
use tetreg::geom::io::load_tet_mesh;
use tetreg::geom::{make_beam_mesh, Point3, TetMesh};
use tetreg::interact::{Prompt, Session as CoreSession, SessionAssets, SessionSnapshot};
use tetreg::metrics::{chamfer_one_sided, evaluate_case, Runtimes};
use tetreg::pbm::{register as core_register, PipelineConfig, PipelineInput, RegistrationMode};
use tetreg::synth::{corrupt_patch, generate_case, load_case, save_case, SynthCase, SynthSpec};

create_exception!(tetreg, TetregError, PyException, "Raised for every engine failure.");

type Xyz = [f64; 3];

fn err(e: tetreg::Error) -> PyErr {
    TetregError::new_err(e.to_string())
}

fn points(p: Vec<Xyz>) -> Vec<Point3> {
    p.into_iter().map(Point3::from).collect()
}

fn xyz(p: &[Point3]) -> Vec<Xyz> {
    p.iter().map(|q| [q.x, q.y, q.z]).collect()
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| TetregError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (s,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let s: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&s).map_err(|e| TetregError::new_err(format!("invalid value: {e}")))
}

fn config(obj: Option<&Bound<'_, PyAny>>) -> PyResult<PipelineConfig> {
    let cfg: PipelineConfig = match obj {
        Some(o) => from_py(o)?,
        None => PipelineConfig::default(),
    };
    cfg.pyramid.validate().map_err(err)?;
    cfg.pbm.validate().map_err(err)?;
    Ok(cfg)
}

fn mode(name: &str) -> PyResult<RegistrationMode> {
    name.parse().map_err(err)
}

fn pair_set(mesh: &TetMesh, cloud: &[Point3], pairs: Option<Vec<[usize; 2]>>) -> PyResult<CorrespondenceSet> {
    match pairs {
        Some(p) => CorrespondenceSet::new(mesh.boundary_count, cloud.len(), p.into_iter().map(|[i, j]| (i, j)).collect()),
        None => mutual_nn(mesh.boundary_nodes(), cloud, &RigidTransform::identity(), default_radius(cloud)),
    }
    .map_err(err)
}

/// Tetrahedral mesh with boundary nodes stored first.
#[pyclass(name = "Mesh", module = "tetreg", frozen)]
pub struct PyMesh {
    inner: Arc<TetMesh>,
}

#[pymethods]
impl PyMesh {
    /// Builds a mesh from raw nodes and tets. Nodes are reordered so the
    /// boundary comes first; `original_index` maps back.
    #[new]
    fn new(nodes: Vec<Xyz>, tets: Vec<[usize; 4]>) -> PyResult<Self> {
        let m = TetMesh::from_raw(points(nodes), tets).map_err(err)?;
        Ok(PyMesh { inner: Arc::new(m) })
    }

    /// Reads TetGen `.node` and `.ele` files.
    #[staticmethod]
    fn load(node: PathBuf, ele: PathBuf) -> PyResult<Self> {
        Ok(PyMesh {
            inner: Arc::new(load_tet_mesh(&node, &ele).map_err(err)?),
        })
    }

    /// Box of `cells` hexahedra of edge `spacing` mm, six tets each.
    #[staticmethod]
    fn beam(cells: [usize; 3], spacing: f64) -> PyResult<Self> {
        Ok(PyMesh {
            inner: Arc::new(make_beam_mesh(cells[0], cells[1], cells[2], spacing).map_err(err)?),
        })
    }

    #[getter]
    fn nodes(&self) -> Vec<Xyz> {
        xyz(&self.inner.nodes)
    }

    #[getter]
    fn tets(&self) -> Vec<[usize; 4]> {
        self.inner.tets.clone()
    }

    #[getter]
    fn boundary_count(&self) -> usize {
        self.inner.boundary_count
    }

    /// Outward boundary triangles, indexing the first `boundary_count` nodes.
    #[getter]
    fn boundary_faces(&self) -> Vec<[usize; 3]> {
        self.inner.boundary_faces.clone()
    }

    #[getter]
    fn original_index(&self) -> Vec<usize> {
        self.inner.original_index.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.node_count()
    }

    fn volume(&self) -> f64 {
        self.inner.total_volume()
    }

    /// Linear-elastic strain energy of a field, in mJ with mm and kPa.
    #[pyo3(signature = (u, young_modulus = 5.0, poisson_ratio = 0.35))]
    fn strain_energy(&self, u: Vec<f64>, young_modulus: f64, poisson_ratio: f64) -> PyResult<f64> {
        let mat = Material::new(young_modulus, poisson_ratio).map_err(err)?;
        let k = assemble_stiffness(&self.inner, &mat).map_err(err)?;
        strain_energy(&k, &u).map_err(err)
    }

    fn jacobian_determinants(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        jacobian_determinants(&self.inner, &u).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Mesh(nodes={}, tets={}, boundary={})",
            self.inner.node_count(),
            self.inner.tets.len(),
            self.inner.boundary_count
        )
    }
}

/// Synthetic case with ground truth.
#[pyclass(name = "Case", module = "tetreg", frozen)]
pub struct PyCase {
    inner: Arc<SynthCase>,
    mesh: Arc<TetMesh>,
}

impl PyCase {
    fn wrap(case: SynthCase) -> Self {
        PyCase {
            mesh: Arc::new(case.mesh.clone()),
            inner: Arc::new(case),
        }
    }
}

#[pymethods]
impl PyCase {
    #[staticmethod]
    #[pyo3(signature = (preset = "liver-beam", seed = 0))]
    fn generate(py: Python<'_>, preset: &str, seed: u64) -> PyResult<Self> {
        let spec = SynthSpec::preset(preset).map_err(err)?;
        let case = py.detach(|| spec.mesh().and_then(|m| generate_case(&m, &spec, seed))).map_err(err)?;
        Ok(PyCase::wrap(case))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyCase::wrap(load_case(&path).map_err(err)?))
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_case(&self.inner, &path).map_err(err)
    }

    #[getter]
    fn preset(&self) -> String {
        self.inner.spec.preset.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn young_modulus(&self) -> f64 {
        self.inner.young_modulus
    }

    #[getter]
    fn visibility(&self) -> f64 {
        self.inner.visibility
    }

    #[getter]
    fn mesh(&self) -> PyMesh {
        PyMesh { inner: self.mesh.clone() }
    }

    #[getter]
    fn cloud(&self) -> Vec<Xyz> {
        xyz(&self.inner.cloud.points)
    }

    #[getter]
    fn u_gt(&self) -> Vec<f64> {
        self.inner.u_gt.clone()
    }

    /// Ground-truth `(boundary vertex, cloud index)` pairs.
    #[getter]
    fn pairs(&self) -> Vec<(usize, usize)> {
        self.inner.correspondences().pairs().to_vec()
    }

    /// Ground-truth pairs with one patch slipped `slip` mm along the surface.
    #[pyo3(signature = (size, slip, seed = 0))]
    fn corrupt_patch<'py>(&self, py: Python<'py>, size: usize, slip: f64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let c = corrupt_patch(&self.inner, size, slip, seed).map_err(err)?;
        to_py(
            py,
            &serde_json::json!({
                "pairs": c.corr.pairs(),
                "patch": c.patch,
                "true_cloud": c.true_cloud,
                "direction": c.direction,
            }),
        )
    }

    /// Full metric report of an estimated field against the ground truth.
    #[pyo3(signature = (u, label = "field"))]
    fn evaluate<'py>(&self, py: Python<'py>, u: Vec<f64>, label: &str) -> PyResult<Bound<'py, PyAny>> {
        let r = evaluate_case(&self.inner, &u, label, Runtimes::default()).map_err(err)?;
        to_py(py, &r)
    }

    fn __repr__(&self) -> String {
        format!(
            "Case(preset={:?}, seed={}, cloud={})",
            self.inner.spec.preset,
            self.inner.seed,
            self.inner.cloud.len()
        )
    }
}

/// Interactive registration session over one mesh and cloud.
#[pyclass(name = "Session", module = "tetreg")]
pub struct PySession {
    inner: CoreSession,
    next_prompt: u64,
}

#[pymethods]
impl PySession {
    /// Starts at revision 0 with zero displacement. Pairs default to
    /// mutual nearest neighbours.
    #[new]
    #[pyo3(signature = (mesh, cloud, pairs = None, config = None))]
    fn new(py: Python<'_>, mesh: &PyMesh, cloud: Vec<Xyz>, pairs: Option<Vec<[usize; 2]>>, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let cfg = self::config(config)?;
        let cloud = points(cloud);
        let corr = pair_set(&mesh.inner, &cloud, pairs)?;
        let assets = SessionAssets {
            mesh: mesh.inner.clone(),
            material: Material::default(),
            cloud: Arc::new(cloud),
        };
        let inner = py.detach(|| CoreSession::new(assets, corr, cfg)).map_err(err)?;
        Ok(PySession { inner, next_prompt: 1 })
    }

    /// Session on a synthetic case with its ground-truth pairs, or with `pairs`.
    #[staticmethod]
    #[pyo3(signature = (case, pairs = None, config = None))]
    fn from_case(py: Python<'_>, case: &PyCase, pairs: Option<Vec<[usize; 2]>>, config: Option<&Bound<'_, PyAny>>) -> PyResult<Self> {
        let pairs = pairs.unwrap_or_else(|| case.inner.correspondences().pairs().iter().map(|&(i, j)| [i, j]).collect());
        Self::new(py, &case.mesh(), case.cloud(), Some(pairs), config)
    }

    /// Resumes a snapshot. The mesh and cloud must hash to the recorded values.
    #[staticmethod]
    fn restore(snapshot: &str, mesh: &PyMesh, cloud: Vec<Xyz>) -> PyResult<Self> {
        let snap = SessionSnapshot::from_json(snapshot).map_err(err)?;
        let inner = CoreSession::restore(&snap, mesh.inner.clone(), Arc::new(points(cloud))).map_err(err)?;
        let next_prompt = snap.history.len() as u64 + 1;
        Ok(PySession { inner, next_prompt })
    }

    #[getter]
    fn revision(&self) -> u64 {
        self.inner.revision()
    }

    /// Current volumetric field, `3 n` mm.
    #[getter]
    fn displacement(&self) -> Vec<f64> {
        self.inner.displacement().to_vec()
    }

    #[getter]
    fn deformed_surface(&self) -> Vec<Xyz> {
        xyz(self.inner.deformed_surface())
    }

    #[getter]
    fn pairs(&self) -> Vec<(usize, usize)> {
        self.inner.correspondences().pairs().to_vec()
    }

    #[getter]
    fn history<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.history())
    }

    /// One-sided Chamfer distance from the cloud to the deformed surface, mm².
    fn chamfer(&self) -> PyResult<f64> {
        chamfer_one_sided(&self.inner.assets().cloud, self.inner.deformed_surface()).map_err(err)
    }

    /// Full registration from the current state; returns diagnostics.
    #[pyo3(signature = (mode = "biompinn-pbm"))]
    fn register<'py>(&mut self, py: Python<'py>, mode: &str) -> PyResult<Bound<'py, PyAny>> {
        let m = self::mode(mode)?;
        let inner = &mut self.inner;
        let d = py.detach(|| inner.register(m)).map_err(err)?;
        to_py(py, &d)
    }

    /// Applies a line pair: a polyline on the deformed model and the matching
    /// polyline on the cloud. Returns the outcome with timings.
    fn prompt<'py>(&mut self, py: Python<'py>, line_on_model: Vec<Xyz>, line_on_cloud: Vec<Xyz>) -> PyResult<Bound<'py, PyAny>> {
        let p = Prompt::new(self.next_prompt, points(line_on_model), points(line_on_cloud));
        let inner = &mut self.inner;
        let out = py.detach(|| inner.apply_prompt(&p)).map_err(err)?;
        self.next_prompt += 1;
        to_py(py, &out)
    }

    /// JSON snapshot: config, asset hashes, history and current field.
    fn snapshot(&self) -> PyResult<String> {
        self.inner.snapshot().to_json().map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Session(revision={}, pairs={})",
            self.inner.revision(),
            self.inner.correspondences().len()
        )
    }
}

/// Registers a mesh to a cloud in one shot. Returns a dict with the
/// volumetric field `u`, the Chamfer distance and diagnostics.
#[pyfunction]
#[pyo3(signature = (mesh, cloud, pairs = None, mode = "biompinn-pbm", config = None))]
fn register<'py>(
    py: Python<'py>,
    mesh: &PyMesh,
    cloud: Vec<Xyz>,
    pairs: Option<Vec<[usize; 2]>>,
    mode: &str,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let m = self::mode(mode)?;
    let cfg = self::config(config)?;
    let cloud = points(cloud);
    let corr = pair_set(&mesh.inner, &cloud, pairs)?;
    let mesh = &mesh.inner;
    let (r, chamfer) = py
        .detach(|| {
            let k = assemble_stiffness(mesh, &Material::default())?;
            let input = PipelineInput {
                nodes: &mesh.nodes,
                boundary_count: mesh.boundary_count,
                stiffness: &k,
                y: &cloud,
                corr: &corr,
            };
            let r = core_register(&input, m, &cfg, None)?;
            let chamfer = chamfer_one_sided(&cloud, &r.deformed_boundary(&input))?;
            Ok((r, chamfer))
        })
        .map_err(err)?;
    to_py(
        py,
        &serde_json::json!({
            "u": r.u,
            "chamfer": chamfer,
            "pairs": corr.len(),
            "diagnostics": r.diagnostics,
        }),
    )
}

/// One-sided Chamfer distance: mean squared distance from each cloud point
/// to its nearest surface point, mm².
#[pyfunction]
fn chamfer(cloud: Vec<Xyz>, surface: Vec<Xyz>) -> PyResult<f64> {
    chamfer_one_sided(&points(cloud), &points(surface)).map_err(err)
}

/// Built-in pipeline settings as a dict; edit and pass back as `config`.
#[pyfunction]
fn default_config(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    to_py(py, &PipelineConfig::default())
}

#[pymodule(name = "tetreg")]
pub fn tetreg_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("TetregError", m.py().get_type::<TetregError>())?;
    m.add("MODES", RegistrationMode::ALL.map(|x| x.as_str()).to_vec())?;
    m.add("PRESETS", tetreg::synth::PRESETS.to_vec())?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyCase>()?;
    m.add_class::<PySession>()?;
    m.add_function(wrap_pyfunction!(register, m)?)?;
    m.add_function(wrap_pyfunction!(chamfer, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    Ok(())
}
