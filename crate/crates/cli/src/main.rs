use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use supercurrents_cli::run::{classify, EXIT_CHECK_FAILED, EXIT_NONCONVERGENCE, EXIT_OK, EXIT_PARSE};
use supercurrents_cli::{list_builtins, run, Objects, RunOptions, Scenario};

#[derive(Parser)]
#[command(name = "supercurrents", version, about = "Superforms, supercurrents, Lelong numbers and degrees")]
struct Cli {
    /// Worker threads for intra-task parallelism.
    #[arg(long, global = true, env = "SUPERCURRENTS_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write reports into a directory.
    Run {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace every seed in the scenario.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// Print the builtin corpus.
    ListBuiltins,
    /// Cone membership of a form at a point, or m-convexity of a polynomial.
    Positivity(PositivityCmd),
    /// Lelong numbers of a builtin current along a decreasing radius grid.
    Lelong(LelongCmd),
    /// Terms of the Lelong-Jensen identity for a builtin smooth current.
    Jensen(JensenCmd),
    /// Partial degrees of a builtin current along an increasing radius grid.
    Degree(DegreeCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum ConeArg {
    Weak,
    Positive,
    MPositive,
}

#[derive(Args)]
struct PositivityCmd {
    #[arg(long)]
    n: usize,
    /// Form text, one `coeff * dx[K] ^ dxi[L]` term per line (use `;` to separate lines).
    #[arg(long, conflicts_with = "field")]
    form: Option<String>,
    /// Polynomial tested for m-convexity on a sampled box.
    #[arg(long)]
    field: Option<String>,
    #[arg(long, value_enum, default_value = "weak")]
    cone: ConeArg,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    point: Vec<f64>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value_t = 256)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    /// Half-width of the sampling box for `--field`.
    #[arg(long, default_value_t = 1.0)]
    box_radius: f64,
}

#[derive(Args)]
struct CurrentArgs {
    /// Builtin current name (see `list-builtins`).
    #[arg(long)]
    builtin: String,
    #[arg(long)]
    n: usize,
    #[arg(long = "param-m")]
    param_m: Option<usize>,
    #[arg(long = "param-k")]
    param_k: Option<usize>,
    #[arg(long = "param-scale")]
    param_scale: Option<f64>,
    /// `tensor:P`, `polar:RxA` or `mc:SAMPLES:SEED`.
    #[arg(long)]
    quad: String,
}

#[derive(Args)]
struct LelongCmd {
    #[command(flatten)]
    current: CurrentArgs,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    center: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    radii: Vec<f64>,
    /// Write `r,nu,stderr` rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct JensenCmd {
    #[command(flatten)]
    current: CurrentArgs,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    center: Vec<f64>,
    #[arg(long)]
    r1: f64,
    #[arg(long)]
    r2: f64,
}

#[derive(Args)]
struct DegreeCmd {
    #[command(flatten)]
    current: CurrentArgs,
    /// Convex weight polynomial or expression; defaults to `|x|`.
    #[arg(long)]
    weight: Option<String>,
    #[arg(long, value_delimiter = ',')]
    radii: Vec<f64>,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Write `R,partial,stderr` rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_quad(s: &str) -> Result<Value, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| t.parse::<u64>().map_err(|_| format!("bad number '{t}' in quadrature '{s}'"));
    match parts.as_slice() {
        ["tensor", p] => Ok(json!({ "method": { "tensor_grid": { "points": num(p)? } } })),
        ["polar", ra] => {
            let (r, a) = ra.split_once('x').ok_or_else(|| format!("polar quadrature needs RxA, got '{ra}'"))?;
            Ok(json!({ "method": { "polar": { "radial": num(r)?, "angular": num(a)? } } }))
        }
        ["mc", n, seed] => Ok(json!({ "method": { "monte_carlo": { "samples": num(n)?, "seed": num(seed)? } } })),
        _ => Err(format!("unrecognized quadrature '{s}'")),
    }
}

fn builtin_current(c: &CurrentArgs) -> Value {
    let mut params = serde_json::Map::new();
    if let Some(m) = c.param_m {
        params.insert("m".into(), json!(m));
    }
    if let Some(k) = c.param_k {
        params.insert("k".into(), json!(k));
    }
    if let Some(s) = c.param_scale {
        params.insert("scale".into(), json!(s));
    }
    json!({ "T": { "builtin": { "name": c.builtin, "params": params } } })
}

/// Runs a single-task scenario and prints its result.
fn one_shot(scenario: Value, csv: Option<&PathBuf>) -> i32 {
    let s: Scenario = match serde_json::from_value(scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let objects = match Objects::build(&s) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_PARSE;
        }
    };
    let task = &s.tasks[0];
    match task.op.execute(&objects) {
        Ok(out) => {
            if let (Some(path), Some(t)) = (csv, &out.table) {
                if let Err(e) = std::fs::write(path, t.to_csv()) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return EXIT_PARSE;
                }
            }
            let (status, code) = match (&out.diverged, out.passed) {
                (Some(_), _) => ("non_convergence", EXIT_NONCONVERGENCE),
                (None, true) => ("passed", EXIT_OK),
                (None, false) => ("failed", EXIT_CHECK_FAILED),
            };
            let doc = json!({ "status": status, "diagnostics": out.diverged, "result": out.result });
            println!("{}", serde_json::to_string_pretty(&doc).unwrap());
            code
        }
        Err(e) => {
            let (code, status) = classify(&e);
            println!("{}", serde_json::to_string_pretty(&json!({ "status": status, "error": e.to_string() })).unwrap());
            code
        }
    }
}

fn scenario_with(n: usize, currents: Value, weights: Value, op: &str, args: Value) -> Value {
    json!({ "name": op, "n": n, "currents": currents, "weights": weights, "tasks": [{ "id": op, "op": op, "args": args }] })
}

fn dispatch(cmd: Command) -> Result<i32, String> {
    Ok(match cmd {
        Command::Run { file, out, seed_override } => {
            let summary = run(&file, &out, &RunOptions { seed_override });
            if let Some(e) = &summary.error {
                eprintln!("error: {e}");
            }
            for t in &summary.tasks {
                eprintln!("{}: {} ({})", t.id, t.status, t.op);
            }
            summary.exit_code
        }
        Command::ListBuiltins => {
            println!("{}", serde_json::to_string_pretty(&list_builtins()).unwrap());
            EXIT_OK
        }
        Command::Positivity(p) => {
            let (op, args, forms) = match (&p.form, &p.field) {
                (Some(text), None) => {
                    let cone = match p.cone {
                        ConeArg::Weak => "weak",
                        ConeArg::Positive => "positive",
                        ConeArg::MPositive => "m_positive",
                    };
                    let args = json!({
                        "form": "A", "cone": cone, "point": p.point, "m": p.m,
                        "sampler": { "samples": p.samples, "seed": p.seed },
                    });
                    ("positivity", args, json!({ "A": { "text": text.replace(';', "\n") } }))
                }
                (None, Some(field)) => {
                    let m = p.m.ok_or("--field needs --m")?;
                    let r = p.box_radius;
                    let args = json!({
                        "field": field, "m": m, "lo": vec![-r; p.n], "hi": vec![r; p.n],
                        "count": p.samples, "seed": p.seed,
                    });
                    ("m_convexity", args, json!({}))
                }
                _ => return Err("give exactly one of --form and --field".into()),
            };
            let s = json!({ "name": op, "n": p.n, "forms": forms, "tasks": [{ "id": op, "op": op, "args": args }] });
            one_shot(s, None)
        }
        Command::Lelong(l) => {
            let c = &l.current;
            let args = json!({ "current": "T", "center": l.center, "radii": l.radii, "quad": parse_quad(&c.quad)? });
            one_shot(scenario_with(c.n, builtin_current(c), json!({}), "lelong_at", args), l.csv.as_ref())
        }
        Command::Jensen(j) => {
            let c = &j.current;
            let args = json!({ "current": "T", "weight": "w", "r1": j.r1, "r2": j.r2, "quad": parse_quad(&c.quad)? });
            let weights = json!({ "w": { "euclidean": j.center } });
            one_shot(scenario_with(c.n, builtin_current(c), weights, "jensen", args), None)
        }
        Command::Degree(d) => {
            let c = &d.current;
            let args = json!({ "current": "T", "weight": d.weight, "radii": d.radii, "quad": parse_quad(&c.quad)?, "seed": d.seed });
            one_shot(scenario_with(c.n, builtin_current(c), json!({}), "degree", args), d.csv.as_ref())
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot configure {k} worker threads: {e}");
            return ExitCode::from(EXIT_PARSE as u8);
        }
    }
    let code = dispatch(cli.command).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_PARSE
    });
    ExitCode::from(code as u8)
}
