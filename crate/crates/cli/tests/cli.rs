use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;
use tetreg::metrics::EvalReport;
use tetreg::synth::{generate_case, load_case, save_case, SynthSpec};
use tetreg_cli::RegisterReport;

const FAST: [&str; 4] = ["--steps", "20", "--width", "16"];

fn tetreg() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tetreg"));
    // Keep the ambient environment from leaking into flag resolution.
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("TETREG_")) {
        c.env_remove(k);
    }
    c.env("TETREG_LOG_LEVEL", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    tetreg().args(args).output().unwrap()
}

fn ok_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn err_json(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(1), "stdout: {}", String::from_utf8_lossy(&out.stdout));
    let stderr = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(stderr.lines().last().unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_case(dir: &Path, identity: bool) -> PathBuf {
    let spec = SynthSpec::preset("prostate").unwrap();
    let mut case = generate_case(&spec.mesh().unwrap(), &spec, 3).unwrap();
    if identity {
        case.u_gt.iter_mut().for_each(|v| *v = 0.0);
        for (j, &i) in case.source_vertex.iter().enumerate() {
            case.cloud.points[j] = case.mesh.nodes[i];
        }
    }
    let path = dir.join(if identity { "identity" } else { "case" });
    save_case(&case, &path).unwrap();
    path
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_is_deterministic_and_rejects_zero_count() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    for d in [&a, &b] {
        let v = ok_json(&run(&[
            "synth",
            "--preset",
            "prostate-beam",
            "--count",
            "3",
            "--seed",
            "7",
            "--out",
            s(d),
        ]));
        assert_eq!(v["count"], 3);
    }
    let fa = files(&a);
    assert_eq!(fa, files(&b));
    assert_eq!(fa.iter().filter(|(p, _)| p.ends_with("case.json")).count(), 3);
    let manifest: Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let seeds: Vec<u64> = manifest["cases"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["seed"].as_u64().unwrap())
        .collect();
    assert_eq!(seeds, [7, 8, 9]);
    assert_eq!(load_case(&a.join("case-001")).unwrap().seed, 8);

    let e = err_json(&run(&["synth", "--count", "0", "--out", s(&t.path().join("c"))]));
    assert_eq!(e["error"], "usage");
}

#[test]
fn identity_case_registers_to_zero_error_in_every_mode() {
    let t = tempfile::tempdir().unwrap();
    let case = small_case(t.path(), true);
    for mode in ["rigid", "nofem", "biompinn", "biompinn-pbm"] {
        let out = t.path().join(mode);
        let mut args = vec!["register", "--case", s(&case), "--mode", mode, "--out", s(&out)];
        args.extend(FAST);
        let v = ok_json(&run(&args));
        let tre = v["surface_tre"].as_f64().unwrap();
        assert!(tre <= 0.1, "{mode}: {tre}");
    }
}

#[test]
fn register_report_round_trips_through_eval() {
    let t = tempfile::tempdir().unwrap();
    let case = small_case(t.path(), false);
    let out = t.path().join("reg");
    let mut args = vec!["register", "--case", s(&case), "--mode", "biompinn-pbm", "--out", s(&out)];
    args.extend(FAST);
    ok_json(&run(&args));
    for f in ["u.txt", "deformed_surface.ply", "trace.csv", "errors.csv", "report.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    // The typed report rejects unknown fields, so parsing it checks the schema.
    let report: RegisterReport = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let registered = report.evaluation.unwrap();

    let eval_dir = t.path().join("eval");
    let v = ok_json(&run(&[
        "eval",
        "--field",
        s(&out.join("u.txt")),
        "--case",
        s(&case),
        "--out",
        s(&eval_dir),
        "--label",
        "biompinn-pbm",
    ]));
    let recomputed = EvalReport::from_json(&std::fs::read_to_string(eval_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(recomputed.raw, registered.raw);
    assert_eq!(recomputed.surface_tre, registered.surface_tre);
    assert_eq!(recomputed.jacobian, registered.jacobian);
    assert_eq!(v["chamfer"].as_f64().unwrap(), registered.chamfer);
    assert_eq!(report.chamfer, registered.chamfer);

    let gt = ok_json(&run(&["eval", "--field", s(&case.join("u_gt.txt")), "--case", s(&case)]));
    assert_eq!(gt["surface_tre"]["mean"].as_f64().unwrap(), 0.0);

    let short = t.path().join("short.txt");
    std::fs::write(&short, "0 0 0\n1 1 1\n").unwrap();
    let e = err_json(&run(&["eval", "--field", s(&short), "--case", s(&case)]));
    assert_eq!(e["error"], "shape_mismatch");
}

#[test]
fn explicit_inputs_and_missing_inputs() {
    let t = tempfile::tempdir().unwrap();
    let case = small_case(t.path(), false);
    let out = t.path().join("explicit");
    let (node, ele, cloud) = (case.join("mesh.node"), case.join("mesh.ele"), case.join("cloud.xyz"));
    let mut args = vec![
        "register",
        "--mesh-node",
        s(&node),
        "--mesh-ele",
        s(&ele),
        "--cloud",
        s(&cloud),
        "--mode",
        "rigid",
        "--out",
        s(&out),
    ];
    args.extend(FAST);
    let v = ok_json(&run(&args));
    assert!(v["surface_tre"].is_null());
    assert!(v["chamfer"].as_f64().unwrap().is_finite());

    let e = err_json(&run(&["register", "--mesh-node", "x.node", "--out", s(&out)]));
    assert_eq!(e["error"], "usage");
    assert!(e["message"].as_str().unwrap().contains("--cloud"));
    let e = err_json(&run(&["register", "--case", s(&t.path().join("nope")), "--out", s(&out)]));
    assert_eq!(e["error"], "io");
}

#[test]
fn config_file_env_and_flags_resolve_in_order() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("c.toml");
    std::fs::write(&cfg, "seed = 5\n[pipeline.pyramid]\nsteps_per_level = 7\n[service]\nmax_sessions = 3\n").unwrap();
    let show = |extra_env: Option<&str>, flags: &[&str]| {
        let mut c = tetreg();
        c.args(["--config", s(&cfg)]).args(flags).arg("config");
        if let Some(seed) = extra_env {
            c.env("TETREG_SEED", seed);
        }
        let out = c.output().unwrap();
        assert!(out.status.success());
        let v: toml::Table = toml::from_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
        v
    };
    let file = show(None, &[]);
    assert_eq!(file["seed"].as_integer(), Some(5));
    assert_eq!(file["pipeline"]["pyramid"]["steps_per_level"].as_integer(), Some(7));
    assert_eq!(file["pipeline"]["pyramid"]["seed"].as_integer(), Some(5));
    assert_eq!(file["pipeline"]["pyramid"]["levels"].as_integer(), Some(4));
    assert_eq!(file["service"]["max_sessions"].as_integer(), Some(3));
    assert_eq!(show(Some("9"), &[])["seed"].as_integer(), Some(9));
    assert_eq!(show(Some("9"), &["--seed", "11"])["seed"].as_integer(), Some(11));

    std::fs::write(&cfg, "sede = 5\n").unwrap();
    assert_eq!(err_json(&run(&["--config", s(&cfg), "config"]))["error"], "config");
    assert_eq!(err_json(&run(&["--threads", "0", "config"]))["error"], "usage");
}

fn http_get(addr: &str, path: &str) -> String {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(stream, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut body = String::new();
    stream.read_to_string(&mut body).unwrap();
    body
}

#[test]
fn serve_health_and_startup_failures() {
    let t = tempfile::tempdir().unwrap();
    small_case(t.path(), false);
    let mut child = tetreg()
        .args(["serve", "--port", "0", "--assets", s(t.path())])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = serde_json::from_str::<Value>(&line).unwrap()["listening"].as_str().unwrap().to_owned();
    let health = http_get(&addr, "/health");
    assert!(health.starts_with("HTTP/1.1 200"), "{health}");
    assert!(health.contains(&format!("\"version\":\"{}\"", env!("CARGO_PKG_VERSION"))));
    assert!(http_get(&addr, "/cases").contains("\"name\":\"case\""));

    let port = addr.rsplit(':').next().unwrap();
    let busy = err_json(&run(&["serve", "--port", port, "--assets", s(t.path())]));
    assert_eq!(busy["error"], "port_busy");
    child.kill().unwrap();
    child.wait().unwrap();

    std::fs::create_dir(t.path().join("junk")).unwrap();
    let bad = err_json(&run(&["serve", "--port", "0", "--assets", s(t.path())]));
    assert_eq!(bad["error"], "assets");
}
