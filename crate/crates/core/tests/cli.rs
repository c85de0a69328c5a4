use std::process::{Command, Output};

use serde_json::Value;

fn udesign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_udesign")).args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn certify_pauli_is_exact() {
    let out = udesign(&["certify", "--source", "pauli", "--d", "2", "--t", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["certificate"]["defect"].as_f64().unwrap() <= 1e-12);
    assert_eq!(v["certificate"]["verdict"], "exact");
}

#[test]
fn generated_clifford_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c1.json");
    let p = path.to_str().unwrap();
    assert!(udesign(&["gen", "--source", "clifford", "--m", "1", "--out", p]).status.success());
    let out = udesign(&["certify", "--source", &format!("file:{p}"), "--t", "2"]);
    assert!(out.status.success());
    assert!(json(&out)["certificate"]["defect"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn config_errors_exit_one() {
    assert_eq!(udesign(&["scale", "--config", "missing.json"]).status.code(), Some(1));
    let out = udesign(&["certify", "--source", "pauli", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(udesign(&["crypto", "--source", "pauli", "--d", "2", "--mode", "sideways"]).status.code(), Some(1));
    assert_eq!(udesign(&["certify", "--source", "clifford:1", "--d", "3"]).status.code(), Some(1));
}

#[test]
fn non_convergence_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tight.json");
    std::fs::write(
        &path,
        r#"{"kind":"scaling-crypto","d":2,"n_grid":[6],"seeds":[0],"restarts":2,"source":"clifford:1","tolerances":{"diamond":1e-30}}"#,
    )
    .unwrap();
    assert_eq!(udesign(&["scale", "--config", path.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn scale_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"kind":"scaling-t-fold","t":1,"d":2,"n_grid":[2,4,8],"seeds":[0,1],"restarts":4,"source":"pauli"}"#,
    )
    .unwrap();
    let csv = dir.path().join("rows.csv");
    let out = udesign(&["scale", "--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("kind,d,t,n,seed,value,norm_kind,wall_ms"));
    assert_eq!(lines.count(), 6);
    let out = udesign(&["scale", "--config", cfg.to_str().unwrap()]);
    let v = json(&out);
    assert_eq!(v["report"], "scaling");
    assert_eq!(v["rows"].as_array().unwrap().len(), 6);
    assert!(v["fit"]["slope"].is_number());
}

#[test]
fn crypto_report_for_pauli() {
    let out = udesign(&["crypto", "--source", "pauli", "--d", "2", "--restarts", "4"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["key_bits"], 2.0);
    assert!(v["indist_defect"]["value"].as_f64().unwrap() <= 1e-10);
    assert!(v["nm_defects"].as_array().unwrap().len() >= 5);
}

#[test]
fn version_prints() {
    let out = udesign(&["version"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("udesign "));
}
