//! On-disk case bundles.
//!
//! A bundle directory holds exactly the files in [`BUNDLE_FILES`]. Nodes are
//! stored boundary-first so indices in the field and correspondence files
//! refer to the stored order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::{AppliedBc, SynthCase};
use super::spec::SynthSpec;
use crate::correspond::io::{load_correspondences, save_correspondences};
use crate::error::{Error, Result};
use crate::geom::io::{load_cloud, load_field, load_tet_mesh, read, save_cloud, save_field, save_tet_mesh, write};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;
pub const MESH_NODE_FILE: &str = "mesh.node";
pub const MESH_ELE_FILE: &str = "mesh.ele";
pub const FIELD_FILE: &str = "u_gt.txt";
pub const CLOUD_FILE: &str = "cloud.xyz";
pub const CORRESPONDENCE_FILE: &str = "correspondences.txt";
pub const CASE_FILE: &str = "case.json";

/// Sorted file listing of a bundle directory.
pub const BUNDLE_FILES: [&str; 6] = [CASE_FILE, CLOUD_FILE, CORRESPONDENCE_FILE, MESH_ELE_FILE, MESH_NODE_FILE, FIELD_FILE];

#[derive(Debug, Serialize, Deserialize)]
struct CaseMeta {
    schema_version: u32,
    spec: SynthSpec,
    seed: u64,
    young_modulus: f64,
    visibility: f64,
    view_direction: [f64; 3],
    bc: AppliedBc,
}

pub fn save_case(case: &SynthCase, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_tet_mesh(&case.mesh, &dir.join(MESH_NODE_FILE), &dir.join(MESH_ELE_FILE))?;
    save_field(&case.u_gt, &dir.join(FIELD_FILE))?;
    save_cloud(&case.cloud, &dir.join(CLOUD_FILE))?;
    save_correspondences(&case.correspondences(), &dir.join(CORRESPONDENCE_FILE))?;
    let meta = CaseMeta {
        schema_version: BUNDLE_SCHEMA_VERSION,
        spec: case.spec.clone(),
        seed: case.seed,
        young_modulus: case.young_modulus,
        visibility: case.visibility,
        view_direction: case.view_direction,
        bc: case.bc.clone(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Json {
        context: CASE_FILE.into(),
        source: e,
    })?;
    write(&dir.join(CASE_FILE), &json)
}

pub fn load_case(dir: &Path) -> Result<SynthCase> {
    let case_path = dir.join(CASE_FILE);
    let meta: CaseMeta = serde_json::from_str(&read(&case_path)?).map_err(|e| Error::Json {
        context: case_path.display().to_string(),
        source: e,
    })?;
    if meta.schema_version != BUNDLE_SCHEMA_VERSION {
        return Err(Error::InvalidInput(format!(
            "{}: unsupported schema version {}",
            case_path.display(),
            meta.schema_version
        )));
    }
    let mesh = load_tet_mesh(&dir.join(MESH_NODE_FILE), &dir.join(MESH_ELE_FILE))?;
    let field_path = dir.join(FIELD_FILE);
    let u_gt = load_field(&field_path)?;
    if u_gt.len() != 3 * mesh.node_count() {
        return Err(Error::parse(
            &field_path,
            0,
            format!("field has {} nodes, mesh has {}", u_gt.len() / 3, mesh.node_count()),
        ));
    }
    let cloud = load_cloud(&dir.join(CLOUD_FILE))?;
    let corr_path = dir.join(CORRESPONDENCE_FILE);
    let corr = load_correspondences(&corr_path, mesh.boundary_count, cloud.len())?;
    let mut source_vertex = vec![usize::MAX; cloud.len()];
    for &(i, j) in corr.pairs() {
        source_vertex[j] = i;
    }
    if source_vertex.contains(&usize::MAX) {
        return Err(Error::parse(&corr_path, 0, "every cloud point needs a source vertex"));
    }
    Ok(SynthCase {
        mesh,
        spec: meta.spec,
        seed: meta.seed,
        young_modulus: meta.young_modulus,
        u_gt,
        cloud,
        source_vertex,
        bc: meta.bc,
        visibility: meta.visibility,
        view_direction: meta.view_direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_case;

    fn case() -> SynthCase {
        let spec = SynthSpec {
            beam_cells: (4, 2, 2),
            beam_spacing: 10.0,
            force_radius: (5.0, 20.0),
            fixed_bc_radius: (10.0, 15.0),
            ..SynthSpec::preset("liver").unwrap()
        };
        generate_case(&spec.mesh().unwrap(), &spec, 4).unwrap()
    }

    #[test]
    fn round_trip_and_listing() {
        let c = case();
        let dir = tempfile::tempdir().unwrap();
        save_case(&c, dir.path()).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, BUNDLE_FILES);
        let back = load_case(dir.path()).unwrap();
        assert_eq!(back.mesh.nodes, c.mesh.nodes);
        assert_eq!(back.mesh.tets, c.mesh.tets);
        assert_eq!(back.u_gt, c.u_gt);
        assert_eq!(back.cloud, c.cloud);
        assert_eq!(back.source_vertex, c.source_vertex);
        assert_eq!(back.bc, c.bc);
        assert_eq!(back.spec, c.spec);
    }

    #[test]
    fn corrupt_field_names_file() {
        let dir = tempfile::tempdir().unwrap();
        save_case(&case(), dir.path()).unwrap();
        std::fs::write(dir.path().join(FIELD_FILE), "0 0 zero\n").unwrap();
        let msg = load_case(dir.path()).unwrap_err().to_string();
        assert!(msg.contains(FIELD_FILE), "{msg}");
    }
}
