use std::path::Path;
use std::process::{Command, Output};

fn rmline(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rmline"));
    cmd.args(args).env_remove("RM_ARITH");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_prints_costs_and_matching() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("w2.json");
    std::fs::write(&inst, r#"{"servers":[0,100],"requests":[1,"1/2"]}"#).unwrap();
    let trace = dir.path().join("trace.json");
    let out = rmline(&["run", "--instance", s(&inst), "--emit-trace", s(&trace)], &[]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["w_online"], "201/2");
    assert_eq!(v["w_opt"], "199/2");
    assert_eq!(v["ratio"], "201/199");
    assert_eq!(v["online"][1]["server"], 1);
    let tr: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(tr["trace"]["phases"][1]["path"]["t_net_cost"], "595/2");
    assert_eq!(tr["instance"]["servers"][1], "100");

    let out = rmline(&["run", "--instance", s(&inst), "--t", "2"], &[]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["t"], "2");
}

#[test]
fn verify_reports_and_exit_status() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("i.json");
    assert!(rmline(&["gen", "--kind", "perturbed-permutation", "--n", "6", "--seed", "2", "--out", s(&inst)], &[])
        .status
        .success());
    let out = rmline(&["verify", "--instance", s(&inst)], &[]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["checks"].as_array().unwrap().len(), 21);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"servers":[0],"requests":[1,2],"t":1}"#).unwrap();
    let out = rmline(&["verify", "--instance", s(&bad)], &[]);
    assert_ne!(out.status.code(), Some(0));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("size mismatch") && err.contains("t must exceed 1"), "{err}");
}

#[test]
fn experiment_honours_arithmetic_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"kinds":["uniform"],"n_values":[6],"seeds":2,"verify":true}"#).unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert!(rmline(&["experiment", "--config", s(&cfg), "--out", s(&a)], &[]).status.success());
    assert!(rmline(&["experiment", "--config", s(&cfg), "--out", s(&b)], &[("RM_ARITH", "float")]).status.success());
    let exact = std::fs::read_to_string(&a).unwrap();
    let float = std::fs::read_to_string(&b).unwrap();
    assert!(exact.lines().nth(1).unwrap().ends_with(",true"));
    assert!(float.lines().nth(1).unwrap().ends_with(','));
    assert_eq!(exact.lines().count(), 3);

    let out = rmline(&["experiment", "--config", s(&cfg), "--out", s(&a)], &[("RM_ARITH", "quad")]);
    assert!(!out.status.success());
    let out = rmline(&["experiment", "--config", s(&cfg)], &[]);
    assert!(!out.status.success());
}
