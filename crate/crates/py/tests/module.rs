use pyo3::prelude::*;
use pyo3::types::PyDict;
use tetreg_py::tetreg_module;

// One interpreter per test binary, so everything runs in a single test.
#[test]
fn module_exposes_cases_sessions_and_errors() {
    pyo3::append_to_inittab!(tetreg_module);
    Python::initialize();
    Python::attach(|py| {
        let locals = PyDict::new(py);
        py.run(
            cr#"
import tetreg
cfg = tetreg.default_config()
cfg["pyramid"]["steps_per_level"] = 10
cfg["pyramid"]["mlp_width"] = 8
case = tetreg.Case.generate("prostate-beam", seed=2)
mesh = case.mesh
n = len(mesh)
gt = case.evaluate(case.u_gt)["surface_tre"]["mean"]
s = tetreg.Session.from_case(case, config=cfg)
rev0 = s.revision
s.register("rigid")
snap = s.snapshot()
back = tetreg.Session.restore(snap, mesh, case.cloud)
same = back.displacement == s.displacement
try:
    tetreg.Session.from_case(case, pairs=[[mesh.boundary_count, 0]])
    rejected = False
except tetreg.TetregError:
    rejected = True
"#,
            None,
            Some(&locals),
        )
        .unwrap();
        let get = |k: &str| locals.get_item(k).unwrap().unwrap();
        assert_eq!(get("gt").extract::<f64>().unwrap(), 0.0);
        assert_eq!(get("rev0").extract::<u64>().unwrap(), 0);
        assert!(get("same").extract::<bool>().unwrap());
        assert!(get("rejected").extract::<bool>().unwrap());
        let n: usize = get("n").extract().unwrap();
        let u: Vec<f64> = get("s").getattr("displacement").unwrap().extract().unwrap();
        assert_eq!(u.len(), 3 * n);
        assert!(u.iter().any(|v| *v != 0.0));
    });
}
