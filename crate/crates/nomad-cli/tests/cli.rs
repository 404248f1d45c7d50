//! End-to-end runs of the `nomad` binary.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn nomad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nomad")).args(args).output().unwrap()
}

fn stdout_ok(args: &[&str]) -> String {
    let out = nomad(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("nomad-cli-{}-{name}", std::process::id()))
}

#[test]
fn generate_prints_graph_model_or_data() {
    let g: Value = serde_json::from_str(&stdout_ok(&["generate", "--graph", "chain:4"])).unwrap();
    assert_eq!(g["p"], 4);
    assert_eq!(g["edges"].as_array().unwrap().len(), 3);

    let m: Value = serde_json::from_str(&stdout_ok(&["generate", "--graph", "chain:4", "--noise-max", "1"])).unwrap();
    assert!(m.get("model").is_some() && m.get("margins").is_some());

    let csv = stdout_ok(&["generate", "--graph", "chain:4", "--noise-max", "1", "--samples", "5"]);
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "1,2,3,4");
    assert_eq!(lines.len(), 6);
}

#[test]
fn recovery_from_model_and_from_distances_file() {
    let r: Value =
        serde_json::from_str(&stdout_ok(&["nomad", "--graph", "gsyn_standin", "--noise-max", "5", "--verify"])).unwrap();
    assert_eq!(r["same_class"], true);

    let dist = scratch("dist.json");
    let ast = scratch("ast.json");
    let dist_arg = dist.to_str().unwrap();
    stdout_ok(&["distances", "--graph", "gsyn_standin", "--noise-max", "5", "--out", dist_arg]);
    let r: Value = serde_json::from_str(&stdout_ok(&[
        "nomad", "--distances", dist_arg, "--graph", "gsyn_standin", "--verify",
    ]))
    .unwrap();
    assert_eq!(r["same_class"], true);

    std::fs::write(&ast, r["ast"].to_string()).unwrap();
    let s: Value =
        serde_json::from_str(&stdout_ok(&["score", "--graph", "gsyn_standin", "--recovered", ast.to_str().unwrap()]))
            .unwrap();
    assert_eq!(s["equivalence_pass"], 1);
    assert_eq!(s["k_recovered"], 1.0);
    let _ = std::fs::remove_file(dist);
    let _ = std::fs::remove_file(ast);
}

#[test]
fn sweep_writes_trials_csv_and_honours_config() {
    let csv = stdout_ok(&["sweep", "--graph", "gsyn_standin", "--noise-max", "5", "--trials", "3", "--seed", "7"]);
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "trial_seed,noise_max,n_samples,equivalence_pass,families_recovered,noncut_recovered,k_recovered,runtime_ms"
    );
    assert_eq!(lines.len(), 4);
    assert!(lines[1..].iter().all(|l| l.contains(",population,1,")));

    let cfg = scratch("cfg.json");
    std::fs::write(&cfg, r#"{"graph": "chain:5", "noise_max": 1.0, "trials": 2}"#).unwrap();
    let cfg_arg = cfg.to_str().unwrap();
    assert_eq!(stdout_ok(&["sweep", "--config", cfg_arg]).lines().count(), 3);
    // Command-line flags override the file.
    assert_eq!(stdout_ok(&["sweep", "--config", cfg_arg, "--trials", "1"]).lines().count(), 2);
    std::fs::write(&cfg, r#"{"grpah": "chain:5"}"#).unwrap();
    assert!(!nomad(&["sweep", "--config", cfg_arg]).status.success());
    let _ = std::fs::remove_file(cfg);
}

#[test]
fn identifiability_demo_reports_decomposition() {
    let r: Value = serde_json::from_str(&stdout_ok(&["identifiability-demo", "--seed", "3"])).unwrap();
    assert!(r["decomposition_error"].as_f64().unwrap() < 1e-9);
    assert_eq!(r["h_in_class"], true);
}

#[test]
fn bad_invocations_fail_with_a_message() {
    for args in [
        vec!["nomad"],
        vec!["generate", "--graph", "no_such_graph"],
        vec!["nomad", "--data", "/nonexistent.csv"],
        vec!["sweep", "--graph", "chain:4", "--samples", "10", "--population"],
    ] {
        let out = nomad(&args);
        assert!(!out.status.success(), "{args:?} should fail");
        assert!(!out.stderr.is_empty());
    }
}
