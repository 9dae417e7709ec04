use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use tetreg::correspond::io::load_correspondences;
use tetreg::correspond::{default_radius, mutual_nn, CorrespondenceSet, RigidTransform};
use tetreg::fem::{assemble_stiffness, Material};
use tetreg::geom::io::{load_cloud, load_field, load_tet_mesh, save_field, save_surface};
use tetreg::geom::{Point3, TetMesh};
use tetreg::metrics::{chamfer_one_sided, evaluate_case, EvalReport, Runtimes};
use tetreg::pbm::{register, Diagnostics, PipelineConfig, PipelineInput, RegistrationMode};
use tetreg::pyramid::save_trace_csv;
use tetreg::synth::{generate_case, load_case, save_case, SynthCase, SynthSpec};
use tetreg_service::Server;

use crate::config::CliConfig;
use crate::error::CliError;
use crate::{Cli, Command, EvalArgs, RegisterArgs, ServeArgs, SynthArgs, TuningArgs};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// `report.json` written by `register`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterReport {
    pub schema_version: u32,
    pub mode: RegistrationMode,
    /// Case directory or mesh `.node` path.
    pub input: String,
    pub boundary_nodes: usize,
    pub cloud_points: usize,
    pub pairs: usize,
    /// One-sided Chamfer distance from the cloud to the deformed surface, mm².
    pub chamfer: f64,
    pub diagnostics: Diagnostics,
    pub config: PipelineConfig,
    /// Present when ground truth is available.
    pub evaluation: Option<EvalReport>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn print_json(v: serde_json::Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{v}");
    let _ = out.flush();
}

/// Resolves the configuration, sets up logging and dispatches.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = CliConfig::load(cli.config.as_deref())?.resolve(cli.seed, cli.threads, cli.log_level)?;
    let _ = env_logger::Builder::new()
        .parse_filters(&cfg.log_level)
        .target(env_logger::Target::Stderr)
        .try_init();
    log::info!("resolved config: {}", serde_json::to_string(&cfg).expect("config serializes"));
    match cli.command {
        Command::Synth(a) => synth(&a, &cfg),
        Command::Register(a) => register_cmd(&a, &cfg),
        Command::Eval(a) => eval(&a),
        Command::Serve(a) => serve(&a, &cfg),
        Command::Config => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

pub fn synth(args: &SynthArgs, cfg: &CliConfig) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let spec = SynthSpec::preset(&args.preset)?;
    let mesh = spec.mesh()?;
    std::fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;
    let mut cases = Vec::new();
    for k in 0..args.count {
        let seed = cfg.seed + k as u64;
        let case = generate_case(&mesh, &spec, seed)?;
        let name = format!("case-{k:03}");
        save_case(&case, &args.out.join(&name))?;
        log::info!(
            "{name}: seed {seed}, visibility {:.3}, {} cloud points",
            case.visibility,
            case.cloud.len()
        );
        cases.push(json!({
            "name": name,
            "seed": seed,
            "young_modulus": case.young_modulus,
            "visibility": case.visibility,
            "cloud_points": case.cloud.len(),
        }));
    }
    let manifest = json!({
        "schema_version": 1,
        "preset": spec.preset,
        "base_seed": cfg.seed,
        "count": args.count,
        "nodes": mesh.node_count(),
        "boundary_nodes": mesh.boundary_count,
        "spec": spec,
        "cases": cases,
    });
    let path = args.out.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes")).map_err(io_err(&path))?;
    print_json(json!({ "manifest": path, "count": args.count }));
    Ok(())
}

fn apply_tuning(mut p: PipelineConfig, t: &TuningArgs) -> Result<PipelineConfig, CliError> {
    let py = &mut p.pyramid;
    py.levels = t.levels.unwrap_or(py.levels);
    py.steps_per_level = t.steps.unwrap_or(py.steps_per_level);
    py.mlp_width = t.width.unwrap_or(py.mlp_width);
    py.lr = t.lr.unwrap_or(py.lr);
    py.lambda1 = t.lambda1.unwrap_or(py.lambda1);
    py.lambda2 = t.lambda2.unwrap_or(py.lambda2);
    p.pbm.beta = t.beta.unwrap_or(p.pbm.beta);
    if t.no_prealign {
        p.rigid_prealign = false;
    }
    p.pyramid.validate()?;
    p.pbm.validate()?;
    Ok(p)
}

struct Inputs {
    label: String,
    mesh: TetMesh,
    cloud: Vec<Point3>,
    corr: CorrespondenceSet,
    truth: Option<SynthCase>,
}

fn load_inputs(args: &RegisterArgs) -> Result<Inputs, CliError> {
    let (label, mesh, cloud, default_corr, truth) = if let Some(dir) = &args.case {
        let case = load_case(dir)?;
        let corr = case.correspondences();
        (
            dir.display().to_string(),
            case.mesh.clone(),
            case.cloud.points.clone(),
            Some(corr),
            Some(case),
        )
    } else {
        let missing: Vec<&str> = [("--mesh-node", &args.mesh_node), ("--mesh-ele", &args.mesh_ele), ("--cloud", &args.cloud)]
            .iter()
            .filter(|(_, v)| v.is_none())
            .map(|(n, _)| *n)
            .collect();
        if !missing.is_empty() {
            return Err(CliError::Usage(format!("missing inputs: give --case or {}", missing.join(", "))));
        }
        let node = args.mesh_node.clone().unwrap();
        let mesh = load_tet_mesh(&node, args.mesh_ele.as_ref().unwrap())?;
        let cloud = load_cloud(args.cloud.as_ref().unwrap())?.points;
        (node.display().to_string(), mesh, cloud, None, None)
    };
    let corr = match (&args.correspondences, default_corr) {
        (Some(p), _) => load_correspondences(p, mesh.boundary_count, cloud.len())?,
        (None, Some(c)) => c,
        (None, None) => mutual_nn(mesh.boundary_nodes(), &cloud, &RigidTransform::identity(), default_radius(&cloud))?,
    };
    Ok(Inputs {
        label,
        mesh,
        cloud,
        corr,
        truth,
    })
}

pub fn register_cmd(args: &RegisterArgs, cfg: &CliConfig) -> Result<(), CliError> {
    let pipeline = apply_tuning(cfg.pipeline.clone(), &args.tuning)?;
    let inp = load_inputs(args)?;
    log::info!(
        "registering {} ({} boundary nodes, {} cloud points, {} pairs) with {}",
        inp.label,
        inp.mesh.boundary_count,
        inp.cloud.len(),
        inp.corr.len(),
        args.mode
    );
    let stiffness = assemble_stiffness(&inp.mesh, &Material::default())?;
    let input = PipelineInput {
        nodes: &inp.mesh.nodes,
        boundary_count: inp.mesh.boundary_count,
        stiffness: &stiffness,
        y: &inp.cloud,
        corr: &inp.corr,
    };
    let r = register(&input, args.mode, &pipeline, None)?;
    let deformed = inp.mesh.displaced_nodes(&r.u)?;
    let boundary = &deformed[..inp.mesh.boundary_count];
    let chamfer = chamfer_one_sided(&inp.cloud, boundary)?;

    let out = &args.out;
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    save_field(&r.u, &out.join("u.txt"))?;
    let mut surface = inp.mesh.surface();
    surface.vertices = boundary.to_vec();
    surface.normals = Some(surface.compute_normals());
    save_surface(&surface, &out.join("deformed_surface.ply"))?;
    save_trace_csv(&r.diagnostics.trace, &out.join("trace.csv"))?;
    let d = &r.diagnostics;
    let runtimes = Runtimes {
        pyramid_seconds: d.pyramid_seconds,
        solve_seconds: d.solve_seconds,
        total_seconds: d.total_seconds,
    };
    let evaluation = match &inp.truth {
        Some(case) => {
            let e = evaluate_case(case, &r.u, args.mode.as_str(), runtimes)?;
            std::fs::write(out.join("errors.csv"), e.errors_csv()).map_err(io_err(out))?;
            Some(e)
        }
        None => None,
    };
    let report = RegisterReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mode: args.mode,
        input: inp.label,
        boundary_nodes: inp.mesh.boundary_count,
        cloud_points: inp.cloud.len(),
        pairs: inp.corr.len(),
        chamfer,
        diagnostics: r.diagnostics.clone(),
        config: pipeline,
        evaluation,
    };
    let path = out.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report).expect("report serializes")).map_err(io_err(&path))?;
    print_json(json!({
        "report": path,
        "mode": args.mode,
        "chamfer": chamfer,
        "surface_tre": report.evaluation.as_ref().map(|e| e.surface_tre.mean),
        "total_seconds": d.total_seconds,
    }));
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let case = load_case(&args.case)?;
    let u = load_field(&args.field)?;
    let report = evaluate_case(&case, &u, &args.label, Runtimes::default())?;
    if let Some(out) = &args.out {
        report.save(out)?;
    }
    print_json(json!({
        "label": report.mode,
        "surface_tre": report.surface_tre,
        "volume_tre": report.volume_tre,
        "chamfer": report.chamfer,
        "unobserved_tre": report.unobserved_mean(),
        "jacobian_in_band": report.jacobian.fraction_in_band,
        "report": args.out.as_ref().map(|o| o.join("report.json")),
    }));
    Ok(())
}

pub fn serve(args: &ServeArgs, cfg: &CliConfig) -> Result<(), CliError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(cfg.threads)
        .enable_all()
        .build()
        .map_err(|source| CliError::Io {
            path: PathBuf::from("<runtime>"),
            source,
        })?;
    rt.block_on(async {
        let server = Server::bind(&format!("{}:{}", args.host, args.port), &args.assets, cfg.service.clone()).await?;
        print_json(json!({ "listening": server.local_addr().to_string() }));
        server.run().await?;
        Ok(())
    })
}
