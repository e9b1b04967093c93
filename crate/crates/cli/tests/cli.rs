use std::path::Path;
use std::process::{Command, Output};

fn qfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qfl"))
        .args(args)
        .output()
        .expect("qfl runs")
}

fn toy_config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../toy.cfg")
        .display()
        .to_string()
}

#[test]
fn train_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = qfl(&["train", "--config", &toy_config(), "--out", out, "--set", "rounds=3", "--trace"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["metrics.csv", "summary.json", "config.cfg", "keytrace.txt"] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["rounds"], 3);
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn verify_qhe_suite() {
    let o = qfl(&["verify", "--suite", "qhe"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("1000/1000"));
}

#[test]
fn bench_adder_prints_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = qfl(&["bench-adder", "--w", "2-3", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8_lossy(&o.stdout).to_string();
    assert!(csv.starts_with("scheme,qubits,cx,ccx,cost,latency"));
    assert!(csv.contains("Ours-w2,5,6,2,"));
    assert!(csv.contains("Ours-w3,7,10,4,"));
    assert!(dir.path().join("comparison.csv").exists());
    assert!(dir.path().join("adder_w3.qc").exists());
}

#[test]
fn unknown_config_key_is_an_error() {
    let o = qfl(&["train", "--set", "colour=blue"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}
