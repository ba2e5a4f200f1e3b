use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trialdesign"))
}

fn run_ok(args: &[&str]) -> Value {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    if out.stdout.is_empty() {
        return Value::Null;
    }
    serde_json::from_slice(&out.stdout).unwrap()
}

fn run_err(args: &[&str]) -> (Output, Value) {
    let out = bin().args(args).output().unwrap();
    assert!(!out.status.success());
    let err = serde_json::from_slice(&out.stderr).unwrap();
    (out, err)
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn toy(dir: &Path) -> PathBuf {
    write(dir, "toy.csv", "intercept,x1\n1,1\n1,-1\n1,1\n1,-1\n")
}

fn synth(dir: &Path, n: usize, p: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("h_{n}_{p}_{seed}.csv"));
    run_ok(&["synth", "--n", &n.to_string(), "--p", &p.to_string(), "--seed", &seed.to_string(), "--out", s(&path)]);
    path
}

#[test]
fn lb_design_on_toy_matrix() {
    let dir = TempDir::new().unwrap();
    let h = toy(dir.path());
    let alloc = dir.path().join("a.csv");
    let v = run_ok(&["design", "--input", s(&h), "--method", "lb", "--allocation-out", s(&alloc)]);
    assert!((v["report"]["surrogate_value"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert_eq!(v["report"]["method"], "LB_APPROX");
    assert_eq!(v["input_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(v["parameters"]["method"], "lb");
    let csv = std::fs::read_to_string(alloc).unwrap();
    assert!(csv.starts_with("patient,treatment\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn rand_design_reports_both_quantile_sets() {
    let dir = TempDir::new().unwrap();
    let h = synth(dir.path(), 30, 3, 1);
    let v = run_ok(&["design", "--input", s(&h), "--method", "rand", "--replicates", "100", "--seed", "4"]);
    let rand = &v["report"]["rand"];
    assert_eq!(rand["replicates"], 100);
    for objective in ["surrogate", "original"] {
        let q = &rand[objective];
        let (a, b, c) = (q["q01"].as_f64().unwrap(), q["q05"].as_f64().unwrap(), q["q50"].as_f64().unwrap());
        assert!(a <= b && b <= c);
    }
}

#[test]
fn self_comparison_gives_zero_reduction() {
    let dir = TempDir::new().unwrap();
    let h = synth(dir.path(), 20, 3, 2);
    let alloc = dir.path().join("a.csv");
    run_ok(&["design", "--input", s(&h), "--method", "rand", "--replicates", "1", "--seed", "9", "--allocation-out", s(&alloc)]);
    let v = run_ok(&[
        "evaluate", "--input", s(&h), "--allocation", s(&alloc), "--rand-designs", "1", "--z0-count", "40", "--seed", "9",
    ]);
    let vr = &v["variance_reduction"];
    assert_eq!(vr["min_reduction"].as_f64().unwrap(), 0.0);
    assert_eq!(vr["max_reduction"].as_f64().unwrap(), 0.0);
    assert_eq!(vr["fraction_positive"].as_f64().unwrap(), 0.0);
}

#[test]
fn stored_allocation_round_trips() {
    let dir = TempDir::new().unwrap();
    let h = synth(dir.path(), 12, 3, 5);
    let alloc = dir.path().join("a.csv");
    let report = dir.path().join("r.json");
    run_ok(&[
        "design", "--input", s(&h), "--method", "exact", "--out", s(&report), "--allocation-out", s(&alloc),
    ]);
    let r: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    let rows = dir.path().join("rows.csv");
    let v = run_ok(&[
        "evaluate", "--input", s(&h), "--allocation", s(&alloc), "--z0-count", "10", "--rand-designs", "20", "--rows-out", s(&rows),
    ]);
    assert_eq!(v["input_sha256"], r["input_sha256"]);
    for key in ["surrogate_value", "original_value", "lb_objective"] {
        let a = r["report"][key].as_f64().unwrap();
        let b = v["objectives"][key].as_f64().unwrap();
        assert!((a - b).abs() <= 1e-12, "{key}: {a} vs {b}");
    }
    assert_eq!(std::fs::read_to_string(rows).unwrap().lines().count(), 11);
}

#[test]
fn single_thread_matches_default() {
    let dir = TempDir::new().unwrap();
    let h = synth(dir.path(), 60, 4, 3);
    let a = run_ok(&["design", "--input", s(&h), "--method", "lb", "--seed", "2"]);
    let b = run_ok(&["--threads", "1", "design", "--input", s(&h), "--method", "lb", "--seed", "2"]);
    assert_eq!(a["report"]["allocation"], b["report"]["allocation"]);
    assert_eq!(a["report"]["surrogate_value"], b["report"]["surrogate_value"]);
}

#[test]
fn synth_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = run_ok(&["synth", "--n", "40", "--p", "5", "--seed", "7", "--out", s(&dir.path().join("a.csv"))]);
    let b = run_ok(&["synth", "--n", "40", "--p", "5", "--seed", "7", "--out", s(&dir.path().join("b.csv"))]);
    assert_eq!(a["output_sha256"], b["output_sha256"]);
}

#[test]
fn scan_writes_scatter_rows() {
    let dir = TempDir::new().unwrap();
    let h = synth(dir.path(), 40, 3, 0);
    let out = dir.path().join("scan.csv");
    let v = run_ok(&["scan", "--input", s(&h), "--replicates", "25", "--out", s(&out)]);
    assert_eq!(v["points"], 25);
    let text = std::fs::read_to_string(out).unwrap();
    assert!(text.starts_with("replicate,original,surrogate,relative_gap\n"));
    assert_eq!(text.lines().count(), 26);
}

#[test]
fn encode_then_design() {
    let dir = TempDir::new().unwrap();
    let schema = write(
        dir.path(),
        "schema.toml",
        r#"
[[columns]]
name = "smoker"
kind = "binary"
levels = ["No", "Yes"]

[[columns]]
name = "group"
kind = "categorical"
levels = ["A", "B", "C"]
reference = "C"
"#,
    );
    let data = write(
        dir.path(),
        "data.csv",
        "id,smoker,group\n1,Yes,A\n2,No,B\n3,Yes,C\n4,No,A\n5,NA,B\n6,Yes,B\n7,No,C\n8,No,A\n9,Yes,B\n",
    );
    let out = dir.path().join("h.csv");
    let v = run_ok(&["encode", "--data", s(&data), "--schema", s(&schema), "--out", s(&out)]);
    assert_eq!(v["excluded_rows"], 1);
    assert_eq!(v["p"], 4);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "intercept,smoker,group=A,group=B");
    assert_eq!(lines.next().unwrap(), "1,1,1,-1");
    assert_eq!(lines.next().unwrap(), "1,-1,-1,1");
    assert_eq!(lines.next().unwrap(), "1,1,-1,-1");
    let d = run_ok(&["design", "--input", s(&out), "--method", "lb"]);
    assert_eq!(d["report"]["allocation"].as_array().unwrap().len(), 8);
}

#[test]
fn errors_are_json() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.csv", "a,b\n1,1\n2,-1\n1,1\n");
    let (out, err) = run_err(&["design", "--input", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(err["error"]["kind"], "FirstColumnNotOnes");
    assert!(err["error"]["message"].as_str().unwrap().contains("row"));

    let (_, err) = run_err(&["design", "--input", s(&dir.path().join("missing.csv"))]);
    assert_eq!(err["error"]["kind"], "Io");

    let h = toy(dir.path());
    let alloc = write(dir.path(), "a.csv", "patient,treatment\n1,1\n2,2\n3,-1\n4,-1\n");
    let (_, err) = run_err(&["evaluate", "--input", s(&h), "--allocation", s(&alloc)]);
    assert_eq!(err["error"]["kind"], "InvalidAllocation");
}
