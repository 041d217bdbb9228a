use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

use eulerlab::experiment::{sha256_hex, Manifest, MANIFEST_NAME};

fn tool(args: &[&str], dir: &Path, threads: Option<&str>) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_eulerlab"));
    c.args(args).current_dir(dir);
    match threads {
        Some(t) => c.env("TOOL_THREADS", t),
        None => c.env_remove("TOOL_THREADS"),
    };
    c.output().unwrap()
}

fn simulate_config() -> Value {
    json!({
        "schema_version": 1,
        "experiment": "simulate",
        "grid": {"nx": 8, "ny": 8, "nz": 8, "lx": 6.283185307179586, "ly": 6.283185307179586,
                 "lz": 6.283185307179586, "domain_kind": "Periodic"},
        "solver": {"dt": 0.01, "t_end": 0.1, "diag_every": 2},
        "initial": {"kind": "taylor_green3d"}
    })
}

fn write(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_manifest_and_plot_extracts_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.json", &simulate_config());
    let out = tool(
        &[
            "run",
            &cfg,
            "--output-dir",
            "res",
            "--override",
            "solver.t_end=0.2",
        ],
        dir.path(),
        Some("2"),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let res = dir.path().join("res");
    let m: Manifest =
        serde_json::from_slice(&std::fs::read(res.join(MANIFEST_NAME)).unwrap()).unwrap();
    assert_eq!(m.status, "completed");
    assert_eq!(m.config["solver"]["t_end"], json!(0.2));
    for a in &m.artifacts {
        assert_eq!(
            sha256_hex(&std::fs::read(res.join(&a.path)).unwrap()),
            a.sha256,
            "{}",
            a.path
        );
    }

    let csv = res.join("diagnostics.csv");
    // Steps 0, 2, ..., 20.
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 12);
    let out = tool(
        &["plot", csv.to_str().unwrap(), "--cols", "t,energy"],
        dir.path(),
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dat = std::fs::read_to_string(res.join("diagnostics.dat")).unwrap();
    let rows: Vec<Vec<f64>> = dat
        .lines()
        .map(|l| l.split(' ').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r.len() == 2));
    assert!((rows[10][0] - 0.2).abs() < 1e-12);
    assert!(res.join("diagnostics.dat.json").exists());

    let out = tool(
        &["plot", csv.to_str().unwrap(), "--cols", "t,helicity"],
        dir.path(),
        None,
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("helicity"));
}

#[test]
fn validate_reports_the_offending_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.json", &simulate_config());
    let ok = tool(&["validate", &cfg], dir.path(), None);
    assert_eq!(ok.status.code(), Some(0));

    let bad = tool(
        &["validate", &cfg, "--override", "grid.nx=7"],
        dir.path(),
        None,
    );
    assert_eq!(bad.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&bad.stderr);
    assert!(msg.contains("nx") && msg.contains("even"), "{msg}");

    // `run` validates before computing anything.
    let run = tool(
        &[
            "run",
            &cfg,
            "--output-dir",
            "never",
            "--override",
            "solver.dt=-1",
        ],
        dir.path(),
        None,
    );
    assert_eq!(run.status.code(), Some(1));
    assert!(!dir.path().join("never").exists());

    let mut v = simulate_config();
    v["experiment"] = json!("uniqueness");
    let missing = write(dir.path(), "uniq.json", &v);
    let out = tool(&["validate", &missing], dir.path(), None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("uniqueness"));
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sim.json", &simulate_config());
    for t in ["0", "many"] {
        let out = tool(&["validate", &cfg], dir.path(), Some(t));
        assert_eq!(out.status.code(), Some(1), "TOOL_THREADS={t}");
    }
}

#[test]
fn numerical_blowup_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = simulate_config();
    v["initial"] = json!({"kind": "random", "kmax": 3, "seed": 5, "amplitude": 50.0});
    v["solver"] = json!({"dt": 0.5, "t_end": 20.0, "abort_sup_ratio": 10.0});
    let cfg = write(dir.path(), "blow.json", &v);
    let out = tool(&["run", &cfg, "--output-dir", "res"], dir.path(), None);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m: Manifest =
        serde_json::from_slice(&std::fs::read(dir.path().join("res").join(MANIFEST_NAME)).unwrap())
            .unwrap();
    assert_ne!(m.status, "completed");
}

#[test]
fn green_function_experiment_reports_exact_symmetry() {
    let dir = tempfile::tempdir().unwrap();
    let v = json!({
        "schema_version": 1,
        "experiment": "green-function",
        "green": {"box": {"l1": 1.0, "l2": 2.0, "l3": 0.5, "n_terms": 16, "tol": 1e-3}, "samples": 20},
        "seed": 3
    });
    let cfg = write(dir.path(), "green.json", &v);
    let out = tool(&["run", &cfg, "--output-dir", "res"], dir.path(), None);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("res/green.json")).unwrap()).unwrap();
    assert_eq!(report["box_symmetry_max"], json!(0.0));
    assert_eq!(report["box_face_max"], json!(0.0));
    assert_eq!(report["halfspace_wall_max"], json!(0.0));
    let csv = std::fs::read_to_string(dir.path().join("res/green_samples.csv")).unwrap();
    assert_eq!(csv.lines().count(), 21);
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        let out = tool(&["validate", p.to_str().unwrap()], &dir, None);
        assert!(
            out.status.success(),
            "{}: {}",
            p.display(),
            String::from_utf8_lossy(&out.stderr)
        );
        n += 1;
    }
    assert_eq!(n, 6);
}
