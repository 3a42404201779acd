use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::Command;
use vortexberry::cli::{parse_config, Experiment, CONVENTION_VERSION};

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("vb_cli_{}_{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(sub: &str, config: &str, dir: &Path, threads: Option<&str>) -> (i32, String) {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vortexberry"));
    cmd.args([sub, "--config", cfg.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap()]);
    if let Some(t) = threads {
        cmd.env("VORTEXBERRY_THREADS", t);
    }
    let out = cmd.output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn report(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join("out/report.json")).unwrap()).unwrap()
}

const SOLVE: &str = r#"{
  "experiment": "solve",
  "grid": {"n": 64, "side_length": 1.0},
  "tau_over_tau0": [2.0],
  "divisor": [[0.5, 0.5]]
}"#;

#[test]
fn solve_reports_energy_bound() {
    let dir = scratch("solve");
    let (code, err) = run("solve", SOLVE, &dir, Some("1"));
    assert_eq!(code, 0, "{err}");
    let r = report(&dir);
    let e = r["results"]["runs"][0]["energy_over_bound"].as_f64().unwrap();
    assert!((0.99..=1.01).contains(&e), "{e}");
    assert_eq!(r["convention_version"], CONVENTION_VERSION);
    assert_eq!(r["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(r["passed"], true);
    for f in ["phi_2.bin", "links_x_2.bin", "links_y_2.bin", "w_2.bin"] {
        assert!(dir.join("out").join(f).exists(), "{f}");
    }
    let (h, v) = vortexberry::lattice::read_dump(&dir.join("out/phi_2.bin")).unwrap();
    assert_eq!(h["count"], 4096);
    assert_eq!(v.len(), 8192);
}

#[test]
fn identical_configs_give_identical_reports() {
    let a = scratch("det_a");
    let b = scratch("det_b");
    assert_eq!(run("solve", SOLVE, &a, None).0, 0);
    assert_eq!(run("solve", SOLVE, &b, Some("1")).0, 0);
    let ra = std::fs::read(a.join("out/report.json")).unwrap();
    let rb = std::fs::read(b.join("out/report.json")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(std::fs::read(a.join("out/phi_2.bin")).unwrap(), std::fs::read(b.join("out/phi_2.bin")).unwrap());
}

#[test]
fn malformed_config_exits_2_without_outputs() {
    for (sub, cfg) in [
        ("solve", "{ not json"),
        ("solve", r#"{"grid": {"n": 63}, "tau_over_tau0": [2.0], "divisor": [[0.5, 0.5]]}"#),
        ("solve", r#"{"grid": {"n": 64}, "tau_over_tau0": [0.5], "divisor": [[0.5, 0.5]]}"#),
        ("solve", r#"{"grid": {"n": 64}, "tau_over_tau0": [2.0], "divisor": [[0.5, 0.5]], "colour": 1}"#),
        ("solve", r#"{"grid": {"n": 16}, "tau_over_tau0": [8.0], "divisor": [[0.5, 0.5]]}"#),
        ("holonomy", r#"{"grid": {"n": 64}, "tau_over_tau0": [2.0], "divisor": [[0.5, 0.5]]}"#),
        ("sweep", r#"{"grid": {"n": 64}, "tau_over_tau0": [2.0, 4.0], "divisor": [[0.5, 0.5]]}"#),
        ("frame", SOLVE),
    ] {
        let dir = scratch("bad");
        let (code, err) = run(sub, cfg, &dir, None);
        assert_eq!(code, 2, "{sub} {cfg}: {err}");
        assert!(err.contains("error"), "{err}");
        assert!(!dir.join("out").exists());
    }
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let dir = scratch("threads");
    assert_eq!(run("solve", SOLVE, &dir, Some("0")).0, 2);
    assert!(!dir.join("out").exists());
}

#[test]
fn failed_check_exits_1_with_outputs() {
    let dir = scratch("check");
    let cfg = SOLVE.replace(r#""divisor""#, r#""checks": {"energy_rel": 1e-9}, "divisor""#);
    let (code, err) = run("solve", &cfg, &dir, None);
    assert_eq!(code, 1);
    assert!(err.contains("energy_bound"), "{err}");
    assert_eq!(report(&dir)["passed"], false);
}

#[test]
fn unreachable_tolerance_is_a_solver_error() {
    let dir = scratch("solver");
    let cfg = SOLVE.replace(r#""divisor""#, r#""tol": 1e-15, "divisor""#);
    let (code, err) = run("solve", &cfg, &dir, None);
    assert_eq!(code, 3, "{err}");
    assert!(!dir.join("out").exists());
}

#[test]
fn duality_matrix_from_config() {
    let dir = scratch("duality");
    let cfg = r#"{
      "experiment": "duality",
      "grid": {"n": 64, "side_length": 1.0},
      "tau_over_tau0": [2.0],
      "divisor": [[0.3, 0.45]],
      "steps": 64
    }"#;
    let (code, err) = run("duality", cfg, &dir, None);
    assert_eq!(code, 0, "{err}");
    let m = &report(&dir)["results"]["runs"][0]["matrix"];
    assert_eq!(m, &serde_json::json!([[0, 1], [-1, 0]]));
}

#[test]
fn parse_config_derives_tau_and_hash() {
    let p = parse_config(SOLVE.as_bytes(), Experiment::Solve).unwrap();
    assert_eq!(p.taus.len(), 1);
    assert!((p.taus[0] - 8.0 * std::f64::consts::PI).abs() < 1e-12);
    let q = parse_config(format!("{SOLVE}\n").as_bytes(), Experiment::Solve).unwrap();
    assert_ne!(p.hash, q.hash);
    assert!(parse_config(SOLVE.as_bytes(), Experiment::Holonomy).is_err());
}
