use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use tetreg::fem::{assemble_stiffness, Material, SparseSymMatrix};
use tetreg::geom::{Point3, TetMesh};
use tetreg::interact::{AssetHashes, SessionAssets};
use tetreg::synth::{load_case, SynthCase, CASE_FILE};

use crate::error::ServiceError;

/// Name of the optional static UI directory inside the asset directory.
pub const UI_DIR: &str = "ui";

/// One case bundle with its shared, immutable session assets.
pub struct CaseEntry {
    pub name: String,
    pub case: SynthCase,
    pub assets: SessionAssets,
    pub stiffness: Arc<SparseSymMatrix>,
    pub hashes: AssetHashes,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseSummary {
    pub name: String,
    pub preset: String,
    pub seed: u64,
    pub nodes: usize,
    pub boundary_nodes: usize,
    pub tets: usize,
    pub cloud_points: usize,
}

impl CaseEntry {
    /// Registration runs with the nominal material: the true stiffness of a
    /// case is unknown to the registration.
    pub fn new(name: String, case: SynthCase) -> Result<Self, ServiceError> {
        let material = Material::default();
        let mesh = Arc::new(case.mesh.clone());
        let stiffness = Arc::new(assemble_stiffness(&mesh, &material)?);
        let assets = SessionAssets {
            mesh,
            material,
            cloud: Arc::new(case.cloud.points.clone()),
        };
        let hashes = AssetHashes::of(&assets);
        Ok(CaseEntry {
            name,
            case,
            assets,
            stiffness,
            hashes,
        })
    }

    pub fn summary(&self) -> CaseSummary {
        CaseSummary {
            name: self.name.clone(),
            preset: self.case.spec.preset.clone(),
            seed: self.case.seed,
            nodes: self.case.mesh.node_count(),
            boundary_nodes: self.case.mesh.boundary_count,
            tets: self.case.mesh.tets.len(),
            cloud_points: self.case.cloud.len(),
        }
    }

    pub fn mesh(&self) -> &Arc<TetMesh> {
        &self.assets.mesh
    }

    pub fn cloud(&self) -> &Arc<Vec<Point3>> {
        &self.assets.cloud
    }
}

/// Cases and the optional UI bundle found in an asset directory.
///
/// Every subdirectory except `ui/` must be a loadable case bundle; anything
/// else makes the directory malformed. Plain files at the top level are
/// ignored.
pub struct Catalog {
    cases: BTreeMap<String, Arc<CaseEntry>>,
    ui_dir: Option<PathBuf>,
}

impl Catalog {
    pub fn load(dir: &Path) -> Result<Self, ServiceError> {
        if !dir.is_dir() {
            return Err(ServiceError::Assets(format!("{} is not a directory", dir.display())));
        }
        let entries = std::fs::read_dir(dir).map_err(|e| ServiceError::Assets(format!("{}: {e}", dir.display())))?;
        let mut catalog = Catalog::empty();
        let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
        dirs.sort();
        for path in dirs {
            let name = path.file_name().and_then(|n| n.to_str()).map(str::to_owned);
            let Some(name) = name else {
                return Err(ServiceError::Assets(format!("{}: directory name is not UTF-8", path.display())));
            };
            if name == UI_DIR {
                if !path.join("index.html").is_file() {
                    return Err(ServiceError::Assets(format!("{}: UI bundle has no index.html", path.display())));
                }
                catalog.ui_dir = Some(path);
                continue;
            }
            if !path.join(CASE_FILE).is_file() {
                return Err(ServiceError::Assets(format!("{}: not a case bundle (no {CASE_FILE})", path.display())));
            }
            let case = load_case(&path).map_err(|e| ServiceError::Assets(format!("{}: {e}", path.display())))?;
            catalog.insert(CaseEntry::new(name, case)?);
        }
        Ok(catalog)
    }

    pub fn empty() -> Self {
        Catalog {
            cases: BTreeMap::new(),
            ui_dir: None,
        }
    }

    pub fn insert(&mut self, entry: CaseEntry) {
        self.cases.insert(entry.name.clone(), Arc::new(entry));
    }

    pub fn get(&self, name: &str) -> Option<Arc<CaseEntry>> {
        self.cases.get(name).cloned()
    }

    /// The case whose mesh and cloud hash to `hashes`.
    pub fn by_hashes(&self, hashes: &AssetHashes) -> Option<Arc<CaseEntry>> {
        self.cases.values().find(|c| &c.hashes == hashes).cloned()
    }

    pub fn summaries(&self) -> Vec<CaseSummary> {
        self.cases.values().map(|c| c.summary()).collect()
    }

    pub fn ui_dir(&self) -> Option<&Path> {
        self.ui_dir.as_deref()
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}
