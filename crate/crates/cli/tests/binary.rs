use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_supercurrents")).args(args).env_remove("SUPERCURRENTS_JOBS").output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn list_builtins_prints_the_catalog() {
    let o = bin(&["list-builtins"]);
    assert!(o.status.success());
    let v = stdout_json(&o);
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|b| b["name"].as_str().unwrap()).collect();
    for want in ["phi_m", "paper_strip_counterexample", "paper_sin_singularity", "beta_power", "plane", "sphere", "catenoid"] {
        assert!(names.contains(&want), "{want}");
    }
}

#[test]
fn run_subcommand_propagates_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let scen = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let ok = bin(&["--jobs", "1", "run", scen.join("check_eq1.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let bad = bin(&["run", scen.join("declared_convex_fails.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(3));
    let missing = bin(&["run", "/nonexistent/scenario.json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn positivity_subcommand_reports_verdicts() {
    let o = bin(&["positivity", "--n", "2", "--form", "1 * dx[1] ^ dxi[1]; -1 * dx[2] ^ dxi[2]", "--point", "0,0", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    assert_eq!(v["result"]["status"], "certified_false");
    assert!(v["result"]["witness"]["value"].as_f64().unwrap() < 0.0);
    let o = bin(&["positivity", "--n", "3", "--field", "x1^2 + x2^2 + x3^2", "--m", "3", "--seed", "1", "--samples", "16"]);
    assert_eq!(stdout_json(&o)["result"]["status"], "plausibly_true");
}

#[test]
fn lelong_jensen_and_degree_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("nu.csv");
    let o = bin(&[
        "lelong", "--builtin", "plane", "--n", "3", "--param-k", "2", "--quad", "tensor:16", "--center", "0,0,0", "--radii", "1,0.5,0.25",
        "--csv", csv.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let nu = stdout_json(&o)["result"]["limit_estimate"].as_f64().unwrap();
    assert!((nu - 2.0 * std::f64::consts::PI).abs() < 1e-2 * nu, "{nu}");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 4);

    let o = bin(&["jensen", "--builtin", "beta_power", "--n", "2", "--quad", "polar:8x16", "--center", "0,0", "--r1", "0.25", "--r2", "1"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["result"]["closed"], true);

    let o = bin(&["degree", "--builtin", "tropical_shifted_line_current", "--n", "2", "--quad", "tensor:128", "--radii", "16,64,256"]);
    assert_eq!(o.status.code(), Some(0));
    let d = stdout_json(&o)["result"]["limit_estimate"].as_f64().unwrap();
    assert!((d - (2.0 + 2f64.sqrt())).abs() < 1e-2, "{d}");

    let o = bin(&["degree", "--builtin", "tropical_line_current", "--n", "2", "--quad", "bogus", "--radii", "1,2"]);
    assert_eq!(o.status.code(), Some(2));
}
