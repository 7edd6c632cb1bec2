use std::path::PathBuf;
use std::process::{Command, Output};

use primeineq_cli::config::ProblemConfig;
use serde_json::Value;

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_primeineq")).args(args).output().expect("binary runs")
}

fn scratch(name: &str, body: &str) -> String {
    let dir = std::env::temp_dir().join(format!("primeineq-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn report(args: &[&str]) -> Value {
    let mut a = args.to_vec();
    a.extend(["--json", "-"]);
    let out = run(&a);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

const SMALL: &str = r#"
[system]
matrix = [
  ["1", "0", "sqrt2", "-sqrt3"],
  ["0", "1", "sqrt5", "-sqrt7"],
]
n = 2000
n_list = [1000, 2000]

[quad]
samples = 4096
seed = 7
"#;

#[test]
fn validate_exit_codes() {
    let cfg = |f: &str| configs().join(f).to_string_lossy().into_owned();
    assert_eq!(run(&["validate", "--config", &cfg("surd.toml")]).status.code(), Some(0));
    assert_eq!(run(&["validate", "--config", &cfg("remark.toml")]).status.code(), Some(0));
    let deg = run(&["validate", "--config", &cfg("degenerate.toml")]);
    assert_eq!(deg.status.code(), Some(2));
    let text = String::from_utf8_lossy(&deg.stdout) + String::from_utf8_lossy(&deg.stderr);
    assert!(text.contains("sqrt3"), "{text}");

    let bad = scratch("bad_scalar.toml", "[system]\nmatrix = [[\"1\", \"sqrt\"], [\"0\", \"1\"]]\n");
    let out = run(&["validate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let broken = scratch("broken.toml", "[system\nmatrix = 3\n");
    assert_eq!(run(&["validate", "--config", &broken]).status.code(), Some(4));
    let flat = scratch("flat.toml", "[system]\nmatrix = [[\"1\", \"sqrt2\", \"0\"], [\"2\", \"sqrt8\", \"0\"]]\n");
    assert_eq!(run(&["validate", "--config", &flat]).status.code(), Some(2));
    assert_eq!(run(&["validate"]).status.code(), Some(4));
}

#[test]
fn budget_refusal() {
    let small = scratch("small_budget.toml", SMALL);
    let out = run(&["count", "--config", &small, "--budget", "10"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("budget"));
}

#[test]
fn reports_are_reproducible_outside_volatile() {
    let small = scratch("small_rerun.toml", SMALL);
    let strip = |mut v: Value| {
        let vol = v.as_object_mut().unwrap().remove("volatile");
        assert!(vol.is_some());
        serde_json::to_string(&v).unwrap()
    };
    let a = strip(report(&["predict", "--config", &small]));
    let b = strip(report(&["predict", "--config", &small]));
    assert_eq!(a, b);
    // the worker count is echoed in the config but does not reach the result
    let one = report(&["predict", "--config", &small, "--workers", "1"]);
    let v: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["result"], one["result"]);
    assert_eq!(v["schema"], "primeineq.report");
    assert_eq!(v["schema_version"], 1);
    assert!(!a.contains("wall_seconds"));
    // a different seed moves the Monte Carlo estimate
    let c = strip(report(&["predict", "--config", &small, "--seed", "8"]));
    assert_ne!(a, c);
}

#[test]
fn compare_counts_agree_with_count() {
    let small = scratch("small_compare.toml", SMALL);
    let csv = scratch("compare.csv", "");
    let cmp = report(&["compare", "--config", &small, "--csv", &csv]);
    let cnt = report(&["count", "--config", &small]);
    let rows = cmp["result"]["rows"].as_array().unwrap();
    let counts = cnt["result"]["counts"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for (r, c) in rows.iter().zip(counts) {
        assert_eq!(r["n"], c["n"]);
        assert_eq!(r["count"]["count"], c["count"]);
        assert_eq!(r["count"]["weighted"], c["weighted"]);
    }
    let table = std::fs::read_to_string(&csv).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,predicted_count,predicted_count_error,count,ratio,weighted_prediction,weighted,weighted_ratio,sandwich_lo,sandwich_hi"
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn local_factors_of_the_hidden_equation() {
    let cfg = configs().join("remark.toml");
    let r = report(&["localfactors", "--config", cfg.to_str().unwrap(), "--pcut", "1000"]);
    let shifts = r["result"]["shifts"].as_array().unwrap();
    assert_eq!(shifts.len(), 1);
    let factors = shifts[0]["series"]["factors"].as_array().unwrap();
    let beta = |i: usize| factors[i]["beta"].as_str().unwrap().to_string();
    assert_eq!((beta(0), beta(1), beta(2), beta(3)), ("2".into(), "3/4".into(), "15/16".into(), "35/36".into()));
    assert_eq!(shifts[0]["local_model_factor"], 1.40625);
}

#[test]
fn config_emit_round_trips() {
    for f in ["surd.toml", "remark.toml", "degenerate.toml", "four_ap.toml"] {
        let src = std::fs::read_to_string(configs().join(f)).unwrap();
        let cfg = ProblemConfig::parse(&src).unwrap();
        assert_eq!(ProblemConfig::parse(&cfg.emit()).unwrap(), cfg, "{f}");
    }
    assert!(ProblemConfig::parse("[system]\nmatrix = [[\"1\"]]\nepsilon = -1\n").is_err());
    assert!(ProblemConfig::parse("[system]\nmatrix = [[\"1\"]]\n[nonsense]\n").is_err());
}
