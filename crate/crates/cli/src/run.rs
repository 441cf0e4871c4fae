//! Scenario execution and report writing.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use supercurrents::Error;

use crate::scenario::{Objects, Scenario};
use crate::tasks::Task;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

pub const SUMMARY_FILE: &str = "report.json";

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub seed_override: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskSummary {
    pub id: String,
    pub op: String,
    pub status: String,
    pub exit_code: i32,
    pub report: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub exit_code: i32,
    pub tasks: Vec<TaskSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Exit code and status label for a library error.
pub fn classify(e: &Error) -> (i32, &'static str) {
    match e {
        Error::Hypothesis(_) => (EXIT_HYPOTHESIS, "hypothesis_failed"),
        Error::NonConvergence(_) => (EXIT_NONCONVERGENCE, "non_convergence"),
        _ => (EXIT_PARSE, "invalid"),
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Parse(_) => "parse",
        Error::Dimension(_) => "dimension",
        Error::Bidegree(_) => "bidegree",
        Error::Domain(_) => "domain",
        Error::NotDifferentiable(_) => "not_differentiable",
        Error::Invalid(_) => "invalid",
        Error::Hypothesis(_) => "hypothesis",
        Error::NonConvergence(_) => "non_convergence",
    }
}

fn header() -> Value {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    json!({ "tool": "supercurrents", "version": env!("CARGO_PKG_VERSION"), "generated_unix": secs })
}

/// Replaces the value of every `seed` key.
pub fn override_seeds(v: &mut Value, seed: u64) {
    match v {
        Value::Object(map) => {
            for (k, x) in map.iter_mut() {
                if k == "seed" && x.is_u64() {
                    *x = json!(seed);
                } else {
                    override_seeds(x, seed);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(|x| override_seeds(x, seed)),
        _ => {}
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id != "report" && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

struct Prepared {
    scenario: Scenario,
    objects: Objects,
}

fn prepare(bytes: &[u8], opts: &RunOptions) -> Result<Prepared, String> {
    let mut raw: Value = serde_json::from_slice(bytes).map_err(|e| format!("scenario is not valid JSON: {e}"))?;
    if let Some(seed) = opts.seed_override {
        override_seeds(&mut raw, seed);
    }
    let scenario: Scenario = serde_json::from_value(raw).map_err(|e| format!("scenario does not parse: {e}"))?;
    let mut seen = BTreeSet::new();
    for t in &scenario.tasks {
        if !valid_id(&t.id) {
            return Err(format!("task id '{}' must be nonempty, ASCII alphanumeric, '_' or '-', and not 'report'", t.id));
        }
        if !seen.insert(t.id.clone()) {
            return Err(format!("duplicate task id '{}'", t.id));
        }
    }
    let objects = Objects::build(&scenario).map_err(|e| e.to_string())?;
    for t in &scenario.tasks {
        t.op.validate(&objects).map_err(|e| format!("task '{}': {e}", t.id))?;
    }
    Ok(Prepared { scenario, objects })
}

fn write(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Runs a scenario file, writing one JSON report per task, CSV tables and a summary
/// into `out`. Returns the process exit code.
pub fn run(file: &Path, out: &Path, opts: &RunOptions) -> RunSummary {
    let fail = |msg: String| RunSummary { exit_code: EXIT_PARSE, tasks: Vec::new(), error: Some(msg) };
    let bytes = match fs::read(file) {
        Ok(b) => b,
        Err(e) => return fail(format!("cannot read {}: {e}", file.display())),
    };
    if let Err(e) = fs::create_dir_all(out) {
        return fail(format!("cannot create {}: {e}", out.display()));
    }
    let hash = hex::encode(Sha256::digest(&bytes));
    let prepared = prepare(&bytes, opts);
    let scenario_info = |name: &str, n: Option<usize>| {
        json!({ "name": name, "n": n, "sha256": hash, "seed_override": opts.seed_override })
    };
    let Prepared { scenario, objects } = match prepared {
        Ok(p) => p,
        Err(msg) => {
            let summary = fail(msg);
            let doc = json!({ "header": header(), "scenario": scenario_info("", None), "summary": summary });
            let _ = write(&out.join(SUMMARY_FILE), &pretty(&doc));
            return summary;
        }
    };
    let info = scenario_info(&scenario.name, Some(scenario.n));
    let mut tasks = Vec::new();
    let mut exit_code = EXIT_OK;
    for task in &scenario.tasks {
        let s = run_task(task, &objects, &info, out);
        let s = match s {
            Ok(s) => s,
            Err(msg) => {
                let summary = RunSummary { exit_code: EXIT_PARSE, tasks, error: Some(msg) };
                return summary;
            }
        };
        if exit_code == EXIT_OK {
            exit_code = s.exit_code;
        }
        tasks.push(s);
    }
    let summary = RunSummary { exit_code, tasks, error: None };
    let doc = json!({ "header": header(), "scenario": info, "summary": summary });
    if let Err(msg) = write(&out.join(SUMMARY_FILE), &pretty(&doc)) {
        return RunSummary { exit_code: EXIT_PARSE, error: Some(msg), ..summary };
    }
    summary
}

fn run_task(task: &Task, objects: &Objects, info: &Value, out: &Path) -> Result<TaskSummary, String> {
    let op = task.op.name();
    let args = serde_json::to_value(&task.op).map_err(|e| e.to_string())?;
    let mut doc = json!({
        "header": header(),
        "scenario": info,
        "task": { "id": task.id, "op": op, "args": args["args"] },
        "quadrature": task.op.quadrature(),
    });
    let mut table_file = None;
    let (status, exit_code) = match task.op.execute(objects) {
        Ok(outcome) => {
            doc["result"] = outcome.result;
            if let Some(t) = outcome.table {
                let name = format!("{}.csv", task.id);
                write(&out.join(&name), &t.to_csv())?;
                doc["table"] = json!(name);
                table_file = Some(name);
            }
            if let Some(why) = outcome.diverged {
                doc["diagnostics"] = json!(why);
                ("non_convergence", EXIT_NONCONVERGENCE)
            } else if outcome.passed {
                ("passed", EXIT_OK)
            } else {
                ("failed", EXIT_CHECK_FAILED)
            }
        }
        Err(e) => {
            let (code, status) = classify(&e);
            doc["error"] = json!({ "kind": error_kind(&e), "message": e.to_string() });
            (status, code)
        }
    };
    doc["status"] = json!(status);
    doc["exit_code"] = json!(exit_code);
    let report = format!("{}.json", task.id);
    write(&out.join(&report), &pretty(&doc))?;
    Ok(TaskSummary { id: task.id.clone(), op: op.to_string(), status: status.to_string(), exit_code, report, table: table_file })
}
