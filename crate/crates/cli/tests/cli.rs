use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mse"))
        .args(args)
        .env_remove("MSE_SEED")
        .output()
        .expect("binary runs")
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn estimates(report: &Value) -> Vec<&Value> {
    report["results"].as_array().unwrap().iter().map(|r| &r["estimate"]).collect()
}

#[test]
fn estimate_bundled_llm() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = mse(&["estimate", "--dataset", "als_deployed", "--method", "llm", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = read_json(&out);
    assert_eq!(estimates(&r)[0]["n_hat"].as_f64().unwrap().round(), 45.0);
    let m = read_json(&dir.path().join("r.manifest.json"));
    assert_eq!(m["config"]["method"], "llm");
    assert_eq!(m["outputs"].as_object().unwrap().len(), 1);
}

#[test]
fn estimate_wtc_sc_to_stdout() {
    let o = mse(&["estimate", "--dataset", "wtc", "--method", "sc"]);
    assert_eq!(o.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(estimates(&r)[0]["n_hat"].as_f64().unwrap().round(), 11977.0);
}

#[test]
fn missing_input_is_a_parse_error() {
    let o = mse(&["estimate", "--input", "missing.json", "--method", "sc"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("parse error"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(mse(&["estimate", "--method", "sc"]).status.code(), Some(1));
    assert_eq!(mse(&["estimate", "--dataset", "wtc", "--method", "nope"]).status.code(), Some(1));
    assert_eq!(mse(&["--help"]).status.code(), Some(0));
}

#[test]
fn infeasible_only_exits_two() {
    // Mostly singletons: the coverage correction factor turns negative.
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.csv");
    std::fs::write(&input, "x111,x110,x101,x011,x100,x010,x001\n1,1,1,1,20,20,20\n").unwrap();
    let o = mse(&["estimate", "--input", input.to_str().unwrap(), "--method", "sc"]);
    assert_eq!(o.status.code(), Some(2));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(estimates(&r)[0]["feasible"], false);
    // One feasible method is enough for a clean exit.
    let o = mse(&["estimate", "--input", input.to_str().unwrap(), "--method", "sc,llm"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn method_all_lists_every_method() {
    let o = mse(&["estimate", "--dataset", "als_nondeployed", "--method", "all", "--K", "100", "--max-iter", "30"]);
    assert_eq!(o.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    let names: Vec<&str> = estimates(&r).iter().map(|e| e["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["thbm", "sc", "qsm", "pqsm", "llm", "mtb", "im"]);
}

#[test]
fn bootstrap_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let trace = dir.path().join("trace.csv");
    let o = mse(&[
        "estimate", "--dataset", "als_nondeployed", "--method", "sc,thbm", "--bootstrap", "20", "--seed", "3", "--K",
        "100", "--max-iter", "40", "--trace", trace.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&out);
    for entry in r["results"].as_array().unwrap() {
        assert_eq!(entry["bootstrap"]["B"], 20);
        assert!(entry["estimate"]["ci_lower"].as_f64().is_some());
    }
    let header = std::fs::read_to_string(&trace).unwrap();
    assert!(header.starts_with("iteration,N,alpha1,alpha2,alpha3,alpha4,objective\n"));
}

#[test]
fn seed_from_environment() {
    let run = |seed: &str| {
        Command::new(env!("CARGO_BIN_EXE_mse"))
            .args(["estimate", "--dataset", "als_deployed", "--method", "sc", "--bootstrap", "30"])
            .env("MSE_SEED", seed)
            .output()
            .unwrap()
            .stdout
    };
    assert_eq!(run("5"), run("5"));
    assert_ne!(run("5"), run("6"));
}

#[test]
fn simulate_writes_tables_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let o = mse(&["simulate", "--pop", "p1", "--n", "500", "--reps", "4", "--seed", "9", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let truth = read_json(&dir.path().join("truth.json"));
    assert_eq!(truth["N"], 500);
    let reps = truth["replicates"].as_array().unwrap();
    assert_eq!(reps.len(), 4);
    for r in reps {
        let t = read_json(&dir.path().join(r["file"].as_str().unwrap()));
        let x0: u64 = ["x111", "x110", "x101", "x011", "x100", "x010", "x001"].iter().map(|k| t[k].as_u64().unwrap()).sum();
        assert!(x0 <= 500);
        assert_eq!(x0 + r["x000"].as_u64().unwrap(), 500);
    }
    // Tables written by simulate feed straight back into estimate.
    let first = dir.path().join(reps[0]["file"].as_str().unwrap());
    assert_eq!(mse(&["estimate", "--input", first.to_str().unwrap(), "--method", "llm"]).status.code(), Some(0));
    assert_eq!(read_json(&dir.path().join("manifest.json"))["outputs"].as_object().unwrap().len(), 5);
}

#[test]
fn simulate_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        mse(&["simulate", "--pop", "s3", "--n", "300", "--reps", "3", "--seed", "4", "--out", d.path().to_str().unwrap()]);
    }
    for f in ["rep_0000.json", "rep_0002.json", "truth.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
}

#[test]
fn invalid_spec_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    std::fs::write(&spec, r#"{"N": 100, "alpha": [0.5, 0.5, 0.5, 0.5]}"#).unwrap();
    let o = mse(&["simulate", "--pop", spec.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(mse(&["simulate", "--pop", "p9", "--out", "/tmp/unused"]).status.code(), Some(1));
}

#[test]
fn benchmark_truth_row_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench.csv");
    let o = mse(&[
        "benchmark", "--pop", "p2", "--n", "200", "--reps", "4", "--methods", "truth,llm,sc", "--B", "20", "--seed", "1",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,RMAE,CP,LCI,infeasible_rate"));
    assert_eq!(lines.next(), Some("truth,0,1,0,0"));
    assert_eq!(lines.count(), 2);
    let json = read_json(&dir.path().join("bench.json"));
    assert_eq!(json["rows"].as_array().unwrap().len(), 3);
    let manifest = read_json(&dir.path().join("bench.manifest.json"));
    assert_eq!(manifest["seed"], 1);

    // Re-running the recorded command reproduces the outputs byte for byte.
    let again = dir.path().join("again.csv");
    let mut args: Vec<String> = manifest["command"].as_array().unwrap()[1..].iter().map(|v| v.as_str().unwrap().to_string()).collect();
    *args.last_mut().unwrap() = again.to_str().unwrap().to_string();
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    assert_eq!(mse(&argv).status.code(), Some(0));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&again).unwrap());
    assert_eq!(std::fs::read(dir.path().join("bench.json")).unwrap(), std::fs::read(dir.path().join("again.json")).unwrap());
}
