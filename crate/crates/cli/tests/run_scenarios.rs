use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use supercurrents_cli::run::{run, RunOptions, EXIT_CHECK_FAILED, EXIT_HYPOTHESIS, EXIT_NONCONVERGENCE, EXIT_OK, EXIT_PARSE};

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn run_value(scenario: &Value, opts: &RunOptions) -> (tempfile::TempDir, supercurrents_cli::RunSummary) {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.json");
    fs::write(&file, serde_json::to_string_pretty(scenario).unwrap()).unwrap();
    let summary = run(&file, &dir.path().join("out"), opts);
    (dir, summary)
}

fn polar(radial: usize, angular: usize) -> Value {
    json!({ "method": { "polar": { "radial": radial, "angular": angular } } })
}

#[test]
fn check_eq1_scenario_lists_every_identity_as_exact() {
    let out = tempfile::tempdir().unwrap();
    let s = run(&scenario_path("check_eq1.json"), out.path(), &RunOptions::default());
    assert_eq!(s.exit_code, EXIT_OK, "{s:?}");
    let rep = read_json(&out.path().join("eq1.json"));
    let checks = rep["result"]["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 100 * 4);
    assert!(checks.iter().all(|c| c["exact_equal"] == json!(true)));
    assert_eq!(rep["result"]["all_exact_equal"], json!(true));
    assert_eq!(rep["status"], json!("passed"));
}

#[test]
fn empty_task_list_gives_an_empty_report() {
    let (dir, s) = run_value(&json!({ "name": "empty", "n": 2, "tasks": [] }), &RunOptions::default());
    assert_eq!(s.exit_code, EXIT_OK);
    assert!(s.tasks.is_empty());
    let summary = read_json(&dir.path().join("out").join("report.json"));
    assert_eq!(summary["summary"]["tasks"], json!([]));
    assert_eq!(summary["summary"]["exit_code"], json!(0));
    assert_eq!(fs::read_dir(dir.path().join("out")).unwrap().count(), 1);
}

#[test]
fn declared_convexity_violation_exits_with_witness() {
    let out = tempfile::tempdir().unwrap();
    let s = run(&scenario_path("declared_convex_fails.json"), out.path(), &RunOptions::default());
    assert_eq!(s.exit_code, EXIT_HYPOTHESIS);
    let rep = read_json(&out.path().join("nu.json"));
    assert_eq!(rep["status"], json!("hypothesis_failed"));
    let msg = rep["error"]["message"].as_str().unwrap();
    assert!(msg.contains("density") && msg.contains("at Some(["), "{msg}");
}

#[test]
fn tour_scenario_passes() {
    let out = tempfile::tempdir().unwrap();
    let s = run(&scenario_path("tour.json"), out.path(), &RunOptions::default());
    assert_eq!(s.exit_code, EXIT_OK, "{s:?}");
    assert_eq!(s.tasks.len(), 7);
    let csv = fs::read_to_string(out.path().join("deg_trop.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("R,partial,stderr"));
    assert_eq!(csv.lines().count(), 5);
    let csv = fs::read_to_string(out.path().join("nu_line.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("r,nu,stderr"));
}

#[test]
fn parse_errors_exit_two_before_any_task_runs() {
    let base = |tasks: Value| {
        json!({
            "n": 2,
            "forms": { "b": { "beta_power": { "k": 2 } } },
            "currents": { "T": { "builtin": { "name": "beta_power" } } },
            "weights": { "w": { "euclidean": [0, 0] } },
            "tasks": tasks,
        })
    };
    let good = json!({ "id": "ok", "op": "integrate",
        "args": { "form": "b", "region": { "ball": { "center": [0, 0], "radius": 1 } }, "quad": polar(4, 4) } });
    let bad_cases = vec![
        json!({ "id": "a", "op": "no_such_op", "args": {} }),
        json!({ "id": "a", "op": "integrate", "args": { "form": "missing", "region": { "ball": { "center": [0, 0], "radius": 1 } }, "quad": polar(4, 4) } }),
        json!({ "id": "a", "op": "integrate", "args": { "form": "b", "region": { "ball": { "center": [0, 0, 0], "radius": 1 } }, "quad": polar(4, 4) } }),
        json!({ "id": "a", "op": "integrate", "args": { "form": "b", "region": { "ball": { "center": [0, 0], "radius": 1 } }, "quad": polar(4, 4), "typo": 1 } }),
        json!({ "id": "a", "op": "jensen", "args": { "current": "T", "weight": "w", "r1": 0.5, "r2": 1,
            "quad": { "method": { "monte_carlo": { "samples": 100 } } } } }),
        json!({ "id": "a", "op": "lelong", "args": { "current": "T", "weight": "w", "radii": [0.5], "quad": polar(4, 4), "declared": "convex" } }),
        json!({ "id": "../escape", "op": "lelong_at", "args": { "current": "T", "center": [0, 0], "radii": [0.5], "quad": polar(4, 4) } }),
    ];
    for bad in bad_cases {
        let (dir, s) = run_value(&base(json!([good.clone(), bad.clone()])), &RunOptions::default());
        assert_eq!(s.exit_code, EXIT_PARSE, "{bad}");
        assert!(s.error.is_some());
        assert!(!dir.path().join("out").join("ok.json").exists(), "{bad}");
    }
    let (_, s) = run_value(&base(json!([good.clone(), good.clone()])), &RunOptions::default());
    assert_eq!(s.exit_code, EXIT_PARSE);
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("broken.json");
    fs::write(&file, "{ \"n\": 2, ").unwrap();
    assert_eq!(run(&file, &dir.path().join("out"), &RunOptions::default()).exit_code, EXIT_PARSE);
    assert_eq!(run(&dir.path().join("absent.json"), &dir.path().join("out"), &RunOptions::default()).exit_code, EXIT_PARSE);
}

fn reproducible_scenario() -> Value {
    json!({
        "name": "reproducible",
        "n": 3,
        "fields": { "g": { "poly": "1 + x1^2 + (x2 - x3)^2" } },
        "forms": { "t": { "beta_power": { "k": 1, "coeff": "g" } } },
        "currents": { "T": { "smooth": { "form": "t" } } },
        "weights": { "w": { "euclidean": [0, 0, 0] } },
        "tasks": [
            { "id": "jensen_mc", "op": "jensen", "args": { "current": "T", "weight": "w", "r1": 0.25, "r2": 1.0,
              "quad": { "method": { "monte_carlo": { "samples": 20000, "seed": 9 } } } } },
            { "id": "nu", "op": "lelong", "args": { "current": "T", "weight": "w", "radii": [0.5, 0.25, 0.125],
              "quad": polar(6, 8), "declared": "convex", "sampler": { "samples": 32, "seed": 4 } } },
        ]
    })
}

fn strip_header(v: &mut Value) {
    v.as_object_mut().unwrap().remove("header");
}

#[test]
fn reruns_are_byte_identical_outside_the_header() {
    let sc = reproducible_scenario();
    let (a, sa) = run_value(&sc, &RunOptions::default());
    let (b, sb) = run_value(&sc, &RunOptions::default());
    assert_eq!(sa.exit_code, EXIT_OK, "{sa:?}");
    assert_eq!(sa, sb);
    let mut names: Vec<String> =
        fs::read_dir(a.path().join("out")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["jensen_mc.json", "nu.csv", "nu.json", "report.json"]);
    for name in names {
        let (pa, pb) = (a.path().join("out").join(&name), b.path().join("out").join(&name));
        if name.ends_with(".csv") {
            assert_eq!(fs::read(&pa).unwrap(), fs::read(&pb).unwrap());
            continue;
        }
        let (mut va, mut vb) = (read_json(&pa), read_json(&pb));
        strip_header(&mut va);
        strip_header(&mut vb);
        assert_eq!(serde_json::to_string(&va).unwrap(), serde_json::to_string(&vb).unwrap(), "{name}");
    }
    let rep = read_json(&a.path().join("out").join("jensen_mc.json"));
    assert_eq!(rep["scenario"]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(rep["quadrature"]["method"]["monte_carlo"], json!({ "samples": 20000, "seed": 9 }));
}

#[test]
fn seed_override_replaces_every_seed() {
    let sc = reproducible_scenario();
    let (a, _) = run_value(&sc, &RunOptions::default());
    let (b, sb) = run_value(&sc, &RunOptions { seed_override: Some(1234) });
    assert_eq!(sb.exit_code, EXIT_OK);
    let ra = read_json(&a.path().join("out").join("jensen_mc.json"));
    let rb = read_json(&b.path().join("out").join("jensen_mc.json"));
    assert_eq!(rb["quadrature"]["method"]["monte_carlo"]["seed"], json!(1234));
    assert_eq!(rb["scenario"]["seed_override"], json!(1234));
    assert_ne!(ra["result"]["outer_mass"]["value"], rb["result"]["outer_mass"]["value"]);
    let nb = read_json(&b.path().join("out").join("nu.json"));
    assert_eq!(nb["task"]["args"]["sampler"]["seed"], json!(1234));
}

#[test]
fn blown_up_limit_exits_four_with_diagnostics() {
    let sc = json!({
        "n": 3,
        "currents": { "T": { "builtin": { "name": "m_lelong_counterexample", "params": { "m": 1 } } } },
        "tasks": [{ "id": "mnu", "op": "m_lelong", "args": { "current": "T", "center": [0, 0, 0], "m": 1,
            "radii": [0.5, 0.25, 0.125, 0.0625], "quad": polar(8, 8), "require_limit": true } }]
    });
    let (dir, s) = run_value(&sc, &RunOptions::default());
    assert_eq!(s.exit_code, EXIT_NONCONVERGENCE);
    let rep = read_json(&dir.path().join("out").join("mnu.json"));
    assert_eq!(rep["status"], json!("non_convergence"));
    assert!(rep["diagnostics"].as_str().unwrap().contains("does not exist"));
    let k = rep["result"]["fitted_exponent"].as_f64().unwrap();
    assert!((k + 1.0).abs() < 0.05, "{k}");
    assert_eq!(rep["result"]["limit_exists"], json!(false));
}

#[test]
fn failed_expectation_exits_one_and_later_tasks_still_run() {
    let sc = json!({
        "n": 2,
        "forms": { "b": { "beta_power": { "k": 2 } } },
        "tasks": [
            { "id": "wrong", "op": "integrate", "args": { "form": "b", "region": { "ball": { "center": [0, 0], "radius": 1 } },
              "quad": polar(4, 8), "expect": { "value": 1.0, "tol": 1e-6 } } },
            { "id": "right", "op": "integrate", "args": { "form": "b", "region": { "ball": { "center": [0, 0], "radius": 1 } },
              "quad": polar(4, 8), "expect": { "value": std::f64::consts::TAU, "tol": 1e-9 } } },
        ]
    });
    let (_, s) = run_value(&sc, &RunOptions::default());
    assert_eq!(s.exit_code, EXIT_CHECK_FAILED);
    assert_eq!(s.tasks[0].status, "failed");
    assert_eq!(s.tasks[1].status, "passed");
}
