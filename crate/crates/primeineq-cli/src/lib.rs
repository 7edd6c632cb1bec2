//! Command-line orchestration: config loading, the subcommands and report emission.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;

use serde_json::{json, Map, Value};

pub const SCHEMA: &str = "primeineq.report";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("hypothesis check failed: {0}")]
    Validation(String),
    #[error("budget refusal: estimated {estimate:.3e} operations exceeds the budget {budget:.3e}")]
    Budget { estimate: f64, budget: f64 },
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Budget { .. } => 3,
            CliError::Parse { .. } => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<primeineq::counter::CountError> for CliError {
    fn from(e: primeineq::counter::CountError) -> Self {
        match e {
            primeineq::counter::CountError::Budget { estimate, budget } => CliError::Budget { estimate, budget },
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<primeineq::analytic::AnalyticError> for CliError {
    fn from(e: primeineq::analytic::AnalyticError) -> Self {
        match e {
            primeineq::analytic::AnalyticError::Count(c) => c.into(),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<primeineq::forms::FormsError> for CliError {
    fn from(e: primeineq::forms::FormsError) -> Self {
        use primeineq::forms::FormsError as F;
        match e {
            F::Algebra(primeineq::algebraic::AlgebraError::Parse { column, message }) => {
                CliError::Parse { line: 0, column, message }
            }
            F::Algebra(a) => CliError::Parse { line: 0, column: 0, message: a.to_string() },
            F::RankDeficient { .. } | F::TooFewVariables { .. } | F::Parallel(..) => CliError::Validation(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

macro_rules! other_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Other(e.to_string())
            }
        }
    )*};
}
other_from!(primeineq::local::LocalError, primeineq::quad::QuadError, primeineq::arith::ArithError, std::io::Error);

/// Rows of a CSV table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }
    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
    pub fn render(&self) -> String {
        let esc = |s: &String| if s.contains([',', '"', '\n']) { format!("\"{}\"", s.replace('"', "\"\"")) } else { s.clone() };
        let mut out = String::new();
        for r in std::iter::once(&self.header).chain(&self.rows) {
            out.push_str(&r.iter().map(esc).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

/// What a subcommand hands back to `main`.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub summary: String,
    pub result: Value,
    pub csv: Option<Csv>,
    /// nonzero when the command ran but a hypothesis failed
    pub status: i32,
}

/// Move every `wall_seconds` field out of `v`, recording it under its JSON path.
fn strip_volatile(v: &mut Value, path: &str, out: &mut Map<String, Value>) {
    match v {
        Value::Object(m) => {
            if let Some(t) = m.remove("wall_seconds") {
                out.insert(format!("{path}/wall_seconds"), t);
            }
            for (k, x) in m.iter_mut() {
                strip_volatile(x, &format!("{path}/{k}"), out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter_mut().enumerate() {
                strip_volatile(x, &format!("{path}/{i}"), out);
            }
        }
        _ => {}
    }
}

/// The versioned report; everything outside `volatile` is reproducible from config and seed.
pub fn envelope(command: &str, config: &config::ProblemConfig, outcome: &Outcome, wall_seconds: f64, workers: usize) -> Value {
    let mut result = outcome.result.clone();
    let mut timings = Map::new();
    strip_volatile(&mut result, "", &mut timings);
    json!({
        "schema": SCHEMA,
        "schema_version": SCHEMA_VERSION,
        "tool_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "status": outcome.status,
        "config": config,
        "result": result,
        "volatile": {
            "wall_seconds": wall_seconds,
            "workers": workers,
            "timings": timings,
        },
    })
}
