//! The subcommands. Each returns an [`Outcome`] with a JSON result, an optional CSV table
//! and a short human-readable summary.

use std::fmt::Write as _;

use primeineq::algebraic::{linalg, parse_matrix};
use primeineq::analytic::{self, DecayVariant};
use primeineq::arith::{PrimeTable, SeqFn, SieveParams, Window};
use primeineq::counter::{self, CountOptions};
use primeineq::forms::{self, LinearSystem, RationalReduction, ShiftSearch};
use primeineq::local::{self, LocalSeries};
use primeineq::quad::QuadOptions;
use serde_json::{json, Value};

use crate::config::{GowersVariantName, ProblemConfig};
use crate::{CliError, Csv, Outcome};

fn system(cfg: &ProblemConfig, n: u64) -> Result<LinearSystem, CliError> {
    Ok(LinearSystem::parse(&cfg.rows(), cfg.v(), cfg.system.epsilon, n)?)
}

fn count_opts(cfg: &ProblemConfig) -> CountOptions {
    CountOptions { budget: cfg.run.budget, strategy: cfg.run.strategy }
}

fn quad_opts(cfg: &ProblemConfig) -> QuadOptions {
    QuadOptions { samples: cfg.quad.samples, seed: cfg.quad.seed }
}

fn g6(x: f64) -> String {
    format!("{x:.6e}")
}

/// Hypothesis verdicts for one system.
struct Hypotheses {
    json: Value,
    failures: Vec<String>,
    u: usize,
}

fn hypotheses(sys: &LinearSystem, c_bound: f64) -> Result<Hypotheses, CliError> {
    let mut failures = Vec::new();
    let degenerate = match forms::is_dual_degenerate(sys) {
        Ok(None) => json!({"checked": true, "degenerate": false}),
        Ok(Some(w)) => {
            let vector: Vec<String> = w.vector.iter().map(|x| x.surd_string()).collect();
            failures.push(format!("L lies in the dual degeneracy variety: row-space vector ({})", vector.join(", ")));
            json!({
                "checked": true,
                "degenerate": true,
                "witness": {
                    "pair": [w.pair.0, w.pair.1],
                    "beta": w.beta.iter().map(|x| x.surd_string()).collect::<Vec<_>>(),
                    "vector": vector,
                },
            })
        }
        Err(e) => {
            failures.push(e.to_string());
            json!({"checked": false, "reason": e.to_string()})
        }
    };
    let rm = forms::rational_dimension(sys);
    let within = sys.shift_within(c_bound);
    if !within {
        failures.push(format!("||v||_inf exceeds {c_bound} N"));
    }
    let json = json!({
        "m": sys.m,
        "d": sys.d,
        "rank": linalg::exact_rank(&sys.l),
        "dual_degeneracy": degenerate,
        "rational_dimension": rm.u,
        "purely_irrational": rm.u == 0,
        "theta_l": rm.theta_l.iter().map(|r| r.iter().map(|x| x.to_string()).collect::<Vec<_>>()).collect::<Vec<_>>(),
        "shift_within_c_n": within,
        "warnings": sys.warnings(),
        "passed": failures.is_empty(),
        "failures": failures,
    });
    Ok(Hypotheses { json, failures, u: rm.u })
}

pub fn validate(cfg: &ProblemConfig) -> Result<Outcome, CliError> {
    let sys = system(cfg, cfg.system.n)?;
    let h = hypotheses(&sys, cfg.system.c_bound)?;
    let mut summary = format!("m = {}, d = {}, rational dimension u = {}\n", sys.m, sys.d, h.u);
    if h.failures.is_empty() {
        summary.push_str("all hypotheses pass\n");
    }
    for f in &h.failures {
        let _ = writeln!(summary, "FAIL: {f}");
    }
    let status = if h.failures.is_empty() { 0 } else { 2 };
    Ok(Outcome { summary, result: h.json, csv: None, status })
}

fn require_valid(sys: &LinearSystem, cfg: &ProblemConfig) -> Result<Hypotheses, CliError> {
    let h = hypotheses(sys, cfg.system.c_bound)?;
    if !h.failures.is_empty() {
        return Err(CliError::Validation(h.failures.join("; ")));
    }
    Ok(h)
}

struct PredictRow {
    json: Value,
    predicted: f64,
    predicted_err: f64,
    weighted: f64,
    sandwich: (f64, f64),
}

fn predict_one(cfg: &ProblemConfig, sys: &LinearSystem) -> Result<(PredictRow, RationalReduction), CliError> {
    let red = forms::rational_reduction(sys, sys.epsilon, ShiftSearch::default());
    let f = Window::unit_box(sys.d);
    let g = Window::cube(sys.m, sys.epsilon);
    let pred = local::predicted_main_term(sys, &red, &f, &g, cfg.local.p_cut, quad_opts(cfg))?;
    let nf = sys.n as f64;
    let scale = nf.powi((sys.d - sys.m) as i32);
    let weighted = pred.value * scale;
    let sandwich = counter::unweighted_from_weighted(weighted, sys.n, sys.d, cfg.sieve.delta);
    let predicted_err = pred.error * scale / nf.ln().powi(sys.d as i32);
    let terms: Vec<Value> = pred
        .terms
        .iter()
        .map(|t| json!({"r_tilde": t.r_tilde, "series": t.series.to_json(0), "j": t.j}))
        .collect();
    let json = json!({
        "n": sys.n,
        "main_term": pred.value,
        "main_term_error": pred.error,
        "weighted_prediction": weighted,
        "predicted_count": pred.predicted_count,
        "predicted_count_error": predicted_err,
        "unweighted_sandwich": [sandwich.0, sandwich.1],
        "terms": terms,
    });
    Ok((PredictRow { json, predicted: pred.predicted_count, predicted_err, weighted, sandwich }, red))
}

pub fn predict(cfg: &ProblemConfig) -> Result<Outcome, CliError> {
    let sys0 = system(cfg, cfg.system.n)?;
    let h = require_valid(&sys0, cfg)?;
    let mut rows = Vec::new();
    let mut csv = Csv::new(&["n", "predicted_count", "predicted_count_error", "weighted_prediction", "sandwich_lo", "sandwich_hi"]);
    let mut summary = String::new();
    let mut reduction = Value::Null;
    for n in cfg.n_list() {
        let sys = system(cfg, n)?;
        let (r, red) = predict_one(cfg, &sys)?;
        let _ = writeln!(summary, "N = {n}: predicted {:.4e} +- {:.2e} prime solutions", r.predicted, r.predicted_err);
        csv.push(vec![n.to_string(), g6(r.predicted), g6(r.predicted_err), g6(r.weighted), g6(r.sandwich.0), g6(r.sandwich.1)]);
        rows.push(r.json);
        reduction = red.to_json();
    }
    let result = json!({"hypotheses": h.json, "reduction": reduction, "predictions": rows});
    Ok(Outcome { summary, result, csv: Some(csv), status: 0 })
}

pub fn count(cfg: &ProblemConfig) -> Result<Outcome, CliError> {
    let ns = cfg.n_list();
    let table = PrimeTable::new(*ns.iter().max().expect("nonempty"));
    let mut rows = Vec::new();
    let mut csv = Csv::new(&["n", "count", "weighted", "strategy", "ops_estimate", "escalations"]);
    let mut summary = String::new();
    for n in ns {
        let sys = system(cfg, n)?;
        let c = counter::count_prime_solutions(&sys, &table, count_opts(cfg))?;
        let _ = writeln!(summary, "N = {n}: {} prime solutions", c.count);
        csv.push(vec![
            n.to_string(),
            c.count.to_string(),
            g6(c.weighted),
            serde_json::to_value(c.strategy).expect("enum").as_str().unwrap_or("").to_string(),
            g6(c.ops_estimate),
            c.escalations.to_string(),
        ]);
        rows.push(serde_json::to_value(&c).expect("serialisable"));
    }
    Ok(Outcome { summary, result: json!({"counts": rows}), csv: Some(csv), status: 0 })
}

fn pseudorandom_row(cfg: &ProblemConfig, sys: &LinearSystem, table: &PrimeTable) -> Result<Value, CliError> {
    let n = sys.n;
    let p = SieveParams::new(n, cfg.sieve.gamma, cfg.sieve.w)?;
    let nu = SeqFn::nu(table, &p, n as i64);
    let lw = SeqFn::local_von_mangoldt(cfg.sieve.w, 1, n as i64);
    let lp = SeqFn::lambda_prime(table, n as i64);
    let f = Window::smooth_unit_box(sys.d, cfg.sieve.smooth);
    let g = Window::smooth_cube(sys.m, sys.epsilon, cfg.sieve.smooth);
    let d = sys.d;
    let t = counter::t_discrete_multi(&[vec![&nu; d], vec![&lw; d], vec![&lp; d]], &f, &g, &sys.l, &sys.v, n, count_opts(cfg))?;
    let (tn, tw, tl) = (t.values[0], t.values[1], t.values[2]);
    Ok(json!({
        "t_nu": tn,
        "t_local_model": tw,
        "t_lambda_prime": tl,
        "nu_vs_model": (tn - tw).abs() / tw,
        "r": p.r,
    }))
}

pub fn compare(cfg: &ProblemConfig) -> Result<Outcome, CliError> {
    let sys0 = system(cfg, cfg.system.n)?;
    let h = require_valid(&sys0, cfg)?;
    let ns = cfg.n_list();
    let table = PrimeTable::new(*ns.iter().max().expect("nonempty"));
    let mut csv = Csv::new(&[
        "n",
        "predicted_count",
        "predicted_count_error",
        "count",
        "ratio",
        "weighted_prediction",
        "weighted",
        "weighted_ratio",
        "sandwich_lo",
        "sandwich_hi",
    ]);
    let mut rows = Vec::new();
    let mut summary = String::from("N, predicted, exact, ratio\n");
    for n in ns {
        let sys = system(cfg, n)?;
        let (p, _) = predict_one(cfg, &sys)?;
        let c = counter::count_prime_solutions(&sys, &table, count_opts(cfg))?;
        let ratio = c.count as f64 / p.predicted;
        let wratio = c.weighted / p.weighted;
        let _ = writeln!(summary, "{n}, {:.4e}, {}, {:.4}", p.predicted, c.count, ratio);
        csv.push(vec![
            n.to_string(),
            g6(p.predicted),
            g6(p.predicted_err),
            c.count.to_string(),
            format!("{ratio:.6}"),
            g6(p.weighted),
            g6(c.weighted),
            format!("{wratio:.6}"),
            g6(p.sandwich.0),
            g6(p.sandwich.1),
        ]);
        let mut row = json!({"n": n, "prediction": p.json, "count": c, "ratio": ratio, "weighted_ratio": wratio});
        if cfg.sieve.pseudorandom {
            let pr = pseudorandom_row(cfg, &sys, &table)?;
            let _ = writeln!(summary, "  |T(nu) - T(Lambda_W)| / T(Lambda_W) = {:.4}", pr["nu_vs_model"].as_f64().unwrap_or(f64::NAN));
            row["pseudorandom"] = pr;
        }
        rows.push(row);
    }
    Ok(Outcome { summary, result: json!({"hypotheses": h.json, "rows": rows}), csv: Some(csv), status: 0 })
}

pub fn gowers(cfg: &ProblemConfig) -> Result<Outcome, CliError> {
    let g = &cfg.gowers;
    let w = cfg.sieve.w;
    let max_n = *g.n_list.iter().max().expect("nonempty");
    let (variant, limit) = match g.variant {
        GowersVariantName::LocalModel => (DecayVariant::LocalModel { w }, max_n),
        GowersVariantName::WTricked => (DecayVariant::WTricked { w, b: g.b }, w * max_n + g.b),
    };
    let table = PrimeTable::new(limit);
    let ns: Vec<usize> = g.n_list.iter().map(|&n| n as usize).collect();
    let t = analytic::gowers_decay_experiment(&table, variant, g.k, &ns)?;
    let mut csv = Csv::new(&["n", "norm"]);
    let mut summary = format!("U^{} norms, W = {w}\n", g.k);
    for (n, v) in &t.rows {
        csv.push(vec![n.to_string(), format!("{v:.10e}")]);
        let _ = writeln!(summary, "N = {n}: {v:.6}");
    }
    let _ = writeln!(summary, "strictly decreasing: {}, final/initial = {:.4}", t.strictly_decreasing, t.final_over_initial);
    Ok(Outcome { summary, result: serde_json::to_value(&t).expect("serialisable"), csv: Some(csv), status: 0 })
}

pub fn circle(cfg: &ProblemConfig) -> Result<Outcome, CliError> {
    let c = &cfg.circle;
    let row_text: Vec<String> = if c.row.is_empty() { cfg.rows()[0].clone() } else { c.row.iter().map(|e| e.text()).collect() };
    let (_, row) = parse_matrix(std::slice::from_ref(&row_text)).map_err(|e| CliError::Parse { line: 0, column: 0, message: e.to_string() })?;
    let l = linalg::approx_matrix(&row);
    let table = PrimeTable::new(*c.n_list.iter().max().expect("nonempty"));
    let mut csv = Csv::new(&["n", "major_sup", "major_mean", "minor_sup_lower_bound", "mean_value_ratio", "mean_value_std_error"]);
    let mut rows = Vec::new();
    let mut summary = format!("row ({})\n", row_text.join(", "));
    for &n in &c.n_list {
        let major = analytic::major_arc_compare(&table, n, c.b, c.major_grid)?;
        let minor = analytic::minor_arc_sup(&table, &l, n, c.b, c.t, c.density)?;
        let mv = analytic::mean_value_estimate(&table, &l, n, c.l, &[-c.t], &[c.t], QuadOptions { samples: c.mean_samples, seed: cfg.quad.seed })?;
        let _ = writeln!(
            summary,
            "N = {n}: major sup {:.4}, minor sup >= {:.4e}, mean value ratio {:.4}{}",
            major.sup,
            minor.sup_lower_bound,
            mv.ratio.value,
            if mv.condition_holds { "" } else { " (mean value condition fails)" }
        );
        csv.push(vec![n.to_string(), g6(major.sup), g6(major.mean), g6(minor.sup_lower_bound), g6(mv.ratio.value), g6(mv.ratio.std_error)]);
        rows.push(json!({
            "n": n,
            "major": {"cut": major.major_cut, "sup": major.sup, "mean": major.mean, "samples": major.rows.len()},
            "minor": minor,
            "mean_value": mv,
        }));
    }
    Ok(Outcome { summary, result: json!({"row": row_text, "rows": rows}), csv: Some(csv), status: 0 })
}

const SHIFT_CAP: usize = 16;

pub fn localfactors(cfg: &ProblemConfig) -> Result<Outcome, CliError> {
    let sys = system(cfg, cfg.system.n)?;
    let red = forms::rational_reduction(&sys, sys.epsilon, ShiftSearch::default());
    let w = cfg.w_list(sys.d);
    let mut csv = Csv::new(&["r_tilde", "p", "beta_p", "beta_p_decimal"]);
    let mut shifts = Vec::new();
    let mut summary = format!("u = {}, {} shift(s)\n", red.u, red.shifts.len());
    for s in red.shifts.iter().take(SHIFT_CAP) {
        let series = if red.u == 0 { LocalSeries::one(cfg.local.p_cut) } else { local::singular_series(&red.xi, &s.r_tilde, cfg.local.p_cut)? };
        let key = s.r_tilde.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        for (p, b) in series.factors.iter().take_while(|f| f.0 <= cfg.local.table_cap) {
            csv.push(vec![key.clone(), p.to_string(), b.to_string(), format!("{:.12}", local::rat_f64(b))]);
        }
        let model = local::local_model_main_term(&red.xi, &s.r_tilde, &w, 1.0)?;
        let _ = writeln!(
            summary,
            "r~ = ({key}): S = {:.6} in [{:.6}, {:.6}], local model factor {:.6}",
            series.truncated, series.lo, series.hi, model
        );
        let listed = series.factors.iter().take_while(|f| f.0 <= cfg.local.table_cap).count();
        shifts.push(json!({"r_tilde": s.r_tilde, "series": series.to_json(listed), "local_model_factor": model, "w": w}));
    }
    let result = json!({"u": red.u, "xi": red.to_json()["xi"], "shifts": shifts, "shifts_total": red.shifts.len()});
    Ok(Outcome { summary, result, csv: Some(csv), status: 0 })
}
