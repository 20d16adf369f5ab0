use std::path::Path;
use std::process::{Command, Output};

fn nmqaoa(args: &[&str], config: &str, dir: &Path) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_nmqaoa"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .env_remove("NMQAOA_WORKERS")
        .output()
        .unwrap()
}

const CLOSED: &str = r#"{ "preset": "paper-4node-closed", "optimizer": { "max_iters": 5, "init": [0.5, 0.5] } }"#;

#[test]
fn solve_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = nmqaoa(&["solve"], CLOSED, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["c_min"], -2.14);
    assert_eq!(v["optimal_group"], serde_json::json!(["0011", "1100"]));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("result.json");
    let out = nmqaoa(&["solve", "--out", target.to_str().unwrap()], CLOSED, dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    assert!(std::fs::read_to_string(target).unwrap().contains("\"approximation_ratio\""));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [r#"{ "preset": "unknown" }"#, r#"{ "preset": "paper-4node-closed", "bogus": 1 }"#, "not json"] {
        let out = nmqaoa(&["solve"], bad, dir.path());
        assert_eq!(out.status.code(), Some(2), "{bad}");
    }
    let out = nmqaoa(&["multinode"], CLOSED, dir.path());
    assert_eq!(out.status.code(), Some(2), "missing multinode section");
}

#[test]
fn solver_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "preset": "table2-multinode",
        "graph": "table2-2",
        "modes": [{ "omega_a": 0.0, "gamma": 5.0, "kappa": 5.0, "levels": 4 }],
        "solver": { "type": "trajectory", "n_traj": 2, "dt": 0.5 },
        "optimizer": { "max_iters": 1, "init": [1.0, 1.0] }
    }"#;
    let out = nmqaoa(&["solve"], cfg, dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reduce dt"));
}

#[test]
fn explore_csv_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "preset": "paper-4node-markovian",
        "graph": "table2-2",
        "explore": { "n_samples": 4, "tau_range": [0.1, 0.4], "depth": 1 }
    }"#;
    let a = nmqaoa(&["explore", "--workers", "1", "--seed", "9"], cfg, dir.path());
    let b = nmqaoa(&["explore", "--workers", "2", "--seed", "9"], cfg, dir.path());
    let c = nmqaoa(&["explore", "--workers", "2", "--seed", "10"], cfg, dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 5);
}
