use std::sync::Arc;

use tetreg::fem::{assemble_stiffness, jacobian_determinants, Material};
use tetreg::interact::{Prompt, Session, SessionAssets, SessionSnapshot};
use tetreg::metrics::{evaluate_case, Runtimes};
use tetreg::pbm::{register, PipelineConfig, PipelineInput, RegistrationMode};
use tetreg::synth::{corrupt_patch, generate_case, load_case, save_case, SynthCase, SynthSpec};

fn fast() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.pyramid.steps_per_level = 20;
    c.pyramid.mlp_width = 16;
    c
}

fn case(preset: &str, seed: u64) -> SynthCase {
    let spec = SynthSpec::preset(preset).unwrap();
    generate_case(&spec.mesh().unwrap(), &spec, seed).unwrap()
}

#[test]
fn bundle_register_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    save_case(&case("liver-beam", 0), dir.path()).unwrap();
    let case = load_case(dir.path()).unwrap();
    let k = assemble_stiffness(&case.mesh, &Material::default()).unwrap();
    let corr = case.correspondences();
    let input = PipelineInput {
        nodes: &case.mesh.nodes,
        boundary_count: case.mesh.boundary_count,
        stiffness: &k,
        y: &case.cloud.points,
        corr: &corr,
    };
    let zero = vec![0.0; case.u_gt.len()];
    let start = evaluate_case(&case, &zero, "zero", Runtimes::default()).unwrap().surface_tre.mean;
    let tre = |mode| {
        let r = register(&input, mode, &PipelineConfig::default(), None).unwrap();
        let e = evaluate_case(&case, &r.u, "m", Runtimes::default()).unwrap().surface_tre.mean;
        (e, r.u)
    };
    let (rigid, _) = tre(RegistrationMode::Rigid);
    let (full, u) = tre(RegistrationMode::BiompinnPbm);
    assert!(rigid < start, "{rigid} vs {start}");
    assert!(full < rigid, "{full} vs {rigid}");
    assert!(jacobian_determinants(&case.mesh, &u).unwrap().iter().all(|&d| d > 0.0));
}

#[test]
fn prompt_session_snapshot_and_replay() {
    let case = case("prostate-beam", 5);
    let bad = corrupt_patch(&case, 12, 10.0, 2).unwrap();
    let assets = SessionAssets::new(case.mesh.clone(), Material::default(), case.cloud.points.clone());
    let mut s = Session::new(assets.clone(), bad.corr.clone(), fast()).unwrap();
    s.register(RegistrationMode::BiompinnPbm).unwrap();
    let surface = s.deformed_surface();
    let model = bad.patch.iter().map(|&i| surface[i]).collect();
    let cloud = bad.true_cloud.iter().map(|&j| case.cloud.points[j]).collect();
    let out = s.apply_prompt(&Prompt::new(1, model, cloud)).unwrap();
    assert_eq!(out.revision, 2);
    assert!(!out.new_pairs.is_empty());
    for (i, j) in bad.patch.iter().zip(&bad.true_cloud) {
        if s.correspondences().target_of(*i) == Some(*j) {
            return finish(&s, &assets);
        }
    }
    panic!("prompt restored none of the true pairs");
}

fn finish(s: &Session, assets: &SessionAssets) {
    let json = s.snapshot().to_json().unwrap();
    let snap = SessionSnapshot::from_json(&json).unwrap();
    let restored = Session::restore(&snap, assets.mesh.clone(), assets.cloud.clone()).unwrap();
    assert_eq!(restored.displacement(), s.displacement());
    let replayed = Session::replay_snapshot(&snap, assets.mesh.clone(), Arc::clone(&assets.cloud)).unwrap();
    assert_eq!(replayed.displacement(), s.displacement());
    assert_eq!(replayed.revision(), s.revision());
}
