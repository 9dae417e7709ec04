use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::sync::Arc;

use super::session::{HistoryEntry, Session, SessionAssets};
use crate::correspond::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::fem::Material;
use crate::geom::{Point3, TetMesh};
use crate::pbm::PipelineConfig;

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

/// SHA-256 of the node coordinates, tetrahedra and boundary count, all
/// little-endian. Hex encoded.
pub fn mesh_hash(mesh: &TetMesh) -> String {
    let mut h = Sha256::new();
    h.update((mesh.nodes.len() as u64).to_le_bytes());
    for p in &mesh.nodes {
        for v in p.iter() {
            h.update(v.to_le_bytes());
        }
    }
    h.update((mesh.tets.len() as u64).to_le_bytes());
    for t in &mesh.tets {
        for &i in t {
            h.update((i as u64).to_le_bytes());
        }
    }
    h.update((mesh.boundary_count as u64).to_le_bytes());
    hex::encode(h.finalize())
}

/// SHA-256 of the cloud coordinates, little-endian. Hex encoded.
pub fn cloud_hash(cloud: &[Point3]) -> String {
    let mut h = Sha256::new();
    h.update((cloud.len() as u64).to_le_bytes());
    for p in cloud {
        for v in p.iter() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetHashes {
    pub mesh: String,
    pub cloud: String,
}

impl AssetHashes {
    pub fn of(assets: &SessionAssets) -> Self {
        AssetHashes {
            mesh: mesh_hash(&assets.mesh),
            cloud: cloud_hash(&assets.cloud),
        }
    }
}

/// Serializable session state. Immutable assets are referenced by hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub schema_version: u32,
    pub revision: u64,
    /// Cumulative volumetric displacement, `3 n_v` mm.
    pub u: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub initial_pairs: Vec<(usize, usize)>,
    pub history: Vec<HistoryEntry>,
    pub material: Material,
    pub config: PipelineConfig,
    pub assets: AssetHashes,
}

impl SessionSnapshot {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|source| Error::Json {
            context: "session snapshot".into(),
            source,
        })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: SessionSnapshot = serde_json::from_str(s).map_err(|source| Error::Json {
            context: "session snapshot".into(),
            source,
        })?;
        if snap.schema_version != SNAPSHOT_SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "snapshot schema {} is not supported (expected {SNAPSHOT_SCHEMA_VERSION})",
                snap.schema_version
            )));
        }
        Ok(snap)
    }
}

impl Session {
    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            revision: self.revision(),
            u: self.displacement().to_vec(),
            pairs: self.correspondences().pairs().to_vec(),
            initial_pairs: self.initial_correspondences().pairs().to_vec(),
            history: self.history().to_vec(),
            material: self.assets().material,
            config: self.config().clone(),
            assets: AssetHashes::of(self.assets()),
        }
    }

    /// Rebuilds a session from a snapshot. The supplied assets must hash to
    /// the recorded values.
    pub fn restore(snapshot: &SessionSnapshot, mesh: Arc<TetMesh>, cloud: Arc<Vec<Point3>>) -> Result<Session> {
        let found = AssetHashes {
            mesh: mesh_hash(&mesh),
            cloud: cloud_hash(&cloud),
        };
        for (asset, want, got) in [
            ("mesh", &snapshot.assets.mesh, &found.mesh),
            ("cloud", &snapshot.assets.cloud, &found.cloud),
        ] {
            if want != got {
                return Err(Error::HashMismatch {
                    asset: asset.into(),
                    expected: want.clone(),
                    found: got.clone(),
                });
            }
        }
        let (n, m) = (mesh.boundary_count, cloud.len());
        let assets = SessionAssets {
            mesh,
            material: snapshot.material,
            cloud,
        };
        let initial = CorrespondenceSet::new(n, m, snapshot.initial_pairs.clone())?;
        let current = CorrespondenceSet::new(n, m, snapshot.pairs.clone())?;
        let mut s = Session::new(assets, initial, snapshot.config.clone())?;
        s.set_state(snapshot.u.clone(), current, snapshot.history.clone(), snapshot.revision)?;
        Ok(s)
    }

    /// Fresh session from the snapshot's initial pairs with its history
    /// re-applied.
    pub fn replay_snapshot(snapshot: &SessionSnapshot, mesh: Arc<TetMesh>, cloud: Arc<Vec<Point3>>) -> Result<Session> {
        let base = SessionSnapshot {
            revision: 0,
            u: vec![0.0; 3 * mesh.node_count()],
            pairs: snapshot.initial_pairs.clone(),
            history: Vec::new(),
            ..snapshot.clone()
        };
        let mut s = Session::restore(&base, mesh, cloud)?;
        s.apply_history(&snapshot.history)?;
        Ok(s)
    }
}

/// Content-addressed meshes and clouds for restoring snapshots.
#[derive(Debug, Default, Clone)]
pub struct AssetStore {
    meshes: HashMap<String, Arc<TetMesh>>,
    clouds: HashMap<String, Arc<Vec<Point3>>>,
}

impl AssetStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_mesh(&mut self, mesh: Arc<TetMesh>) -> String {
        let h = mesh_hash(&mesh);
        self.meshes.insert(h.clone(), mesh);
        h
    }

    pub fn insert_cloud(&mut self, cloud: Arc<Vec<Point3>>) -> String {
        let h = cloud_hash(&cloud);
        self.clouds.insert(h.clone(), cloud);
        h
    }

    pub fn insert(&mut self, assets: &SessionAssets) -> AssetHashes {
        AssetHashes {
            mesh: self.insert_mesh(assets.mesh.clone()),
            cloud: self.insert_cloud(assets.cloud.clone()),
        }
    }

    pub fn mesh(&self, hash: &str) -> Option<Arc<TetMesh>> {
        self.meshes.get(hash).cloned()
    }

    pub fn cloud(&self, hash: &str) -> Option<Arc<Vec<Point3>>> {
        self.clouds.get(hash).cloned()
    }

    /// Restores a snapshot from the assets it references.
    pub fn restore(&self, snapshot: &SessionSnapshot) -> Result<Session> {
        let mesh = self
            .mesh(&snapshot.assets.mesh)
            .ok_or_else(|| Error::InvalidInput(format!("missing mesh asset {}", snapshot.assets.mesh)))?;
        let cloud = self
            .cloud(&snapshot.assets.cloud)
            .ok_or_else(|| Error::InvalidInput(format!("missing cloud asset {}", snapshot.assets.cloud)))?;
        Session::restore(snapshot, mesh, cloud)
    }
}
