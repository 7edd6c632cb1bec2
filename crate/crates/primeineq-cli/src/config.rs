//! Problem configuration: one TOML document, every default written back on emit.

use primeineq::algebraic::{parse_scalar, AlgebraError};
use primeineq::counter::Strategy;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A matrix entry: scalar text such as `"1/2 + 3*sqrt2"`, or a bare integer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Int(i64),
    Text(String),
}

impl Entry {
    pub fn text(&self) -> String {
        match self {
            Entry::Int(i) => i.to_string(),
            Entry::Text(s) => s.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub matrix: Vec<Vec<Entry>>,
    /// empty means v = 0
    #[serde(default)]
    pub v: Vec<f64>,
    #[serde(default = "one")]
    pub epsilon: f64,
    #[serde(default = "default_n")]
    pub n: u64,
    /// used by predict, count and compare instead of `n` when nonempty
    #[serde(default)]
    pub n_list: Vec<u64>,
    /// the bound C in ||v||_inf <= C N
    #[serde(default = "one")]
    pub c_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SieveSection {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_w")]
    pub w: u64,
    /// per-coordinate moduli for the local model; empty means `w` everywhere
    #[serde(default)]
    pub w_per_coord: Vec<u64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// lower cut-off for the unweighted count sandwich, primes in [delta N, N]
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// also compare T(nu) with T(Lambda_W) and T(Lambda') in `compare`
    #[serde(default)]
    pub pseudorandom: bool,
    /// smoothing parameter of the F and G windows in the weighted experiments
    #[serde(default = "default_smooth")]
    pub smooth: f64,
}

impl Default for SieveSection {
    fn default() -> Self {
        SieveSection {
            gamma: default_gamma(),
            w: default_w(),
            w_per_coord: Vec::new(),
            eta: default_eta(),
            delta: default_delta(),
            pseudorandom: false,
            smooth: default_smooth(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalSection {
    #[serde(default = "default_pcut")]
    pub p_cut: u64,
    /// primes listed per shift in localfactors
    #[serde(default = "default_table_cap")]
    pub table_cap: u64,
}

impl Default for LocalSection {
    fn default() -> Self {
        LocalSection { p_cut: default_pcut(), table_cap: default_table_cap() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSection {
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for QuadSection {
    fn default() -> Self {
        QuadSection { samples: default_samples(), seed: default_seed() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_budget")]
    pub budget: f64,
    /// 0 means machine parallelism
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection { budget: default_budget(), workers: 0, strategy: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GowersVariantName {
    LocalModel,
    WTricked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GowersSection {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_gowers_n")]
    pub n_list: Vec<u64>,
    #[serde(default = "default_variant")]
    pub variant: GowersVariantName,
    /// residue class for the W-tricked variant
    #[serde(default = "default_b")]
    pub b: u64,
}

impl Default for GowersSection {
    fn default() -> Self {
        GowersSection { k: default_k(), n_list: default_gowers_n(), variant: default_variant(), b: default_b() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircleSection {
    #[serde(default = "default_circle_n")]
    pub n_list: Vec<u64>,
    /// major arc exponent B in log^B N / N
    #[serde(default = "one")]
    pub b: f64,
    /// minor arc outer radius
    #[serde(default = "one")]
    pub t: f64,
    #[serde(default = "default_major_grid")]
    pub major_grid: usize,
    #[serde(default = "default_density")]
    pub density: usize,
    /// row used by the minor arc and mean value diagnostics; empty means the first row
    #[serde(default)]
    pub row: Vec<Entry>,
    #[serde(default = "default_l")]
    pub l: u32,
    #[serde(default = "default_mean_samples")]
    pub mean_samples: u64,
}

impl Default for CircleSection {
    fn default() -> Self {
        CircleSection {
            n_list: default_circle_n(),
            b: 1.0,
            t: 1.0,
            major_grid: default_major_grid(),
            density: default_density(),
            row: Vec::new(),
            l: default_l(),
            mean_samples: default_mean_samples(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub sieve: SieveSection,
    #[serde(default)]
    pub local: LocalSection,
    #[serde(default)]
    pub quad: QuadSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub gowers: GowersSection,
    #[serde(default)]
    pub circle: CircleSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn one() -> f64 {
    1.0
}
fn default_n() -> u64 {
    10_000
}
fn default_gamma() -> f64 {
    0.1
}
fn default_w() -> u64 {
    30
}
fn default_eta() -> f64 {
    0.1
}
fn default_delta() -> f64 {
    0.1
}
fn default_smooth() -> f64 {
    0.2
}
fn default_pcut() -> u64 {
    100_000
}
fn default_table_cap() -> u64 {
    50
}
fn default_samples() -> u64 {
    1 << 20
}
fn default_seed() -> u64 {
    0x5eed
}
fn default_budget() -> f64 {
    primeineq::counter::DEFAULT_BUDGET
}
fn default_k() -> usize {
    2
}
fn default_gowers_n() -> Vec<u64> {
    (12..=17).map(|e| 1u64 << e).collect()
}
fn default_variant() -> GowersVariantName {
    GowersVariantName::LocalModel
}
fn default_b() -> u64 {
    1
}
fn default_circle_n() -> Vec<u64> {
    vec![10_000, 100_000, 1_000_000]
}
fn default_major_grid() -> usize {
    1024
}
fn default_density() -> usize {
    512
}
fn default_l() -> u32 {
    2
}
fn default_mean_samples() -> u64 {
    4096
}

/// 1-based line and column of a byte offset.
pub fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, col)
}

impl ProblemConfig {
    pub fn parse(src: &str) -> Result<Self, CliError> {
        let cfg: ProblemConfig = toml::from_str(src).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(src, s.start));
            CliError::Parse { line, column, message: e.message().to_string() }
        })?;
        cfg.check_ranges()?;
        cfg.check_scalars(src)?;
        Ok(cfg)
    }

    pub fn emit(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn rows(&self) -> Vec<Vec<String>> {
        self.system.matrix.iter().map(|r| r.iter().map(Entry::text).collect()).collect()
    }

    pub fn v(&self) -> Vec<f64> {
        if self.system.v.is_empty() {
            vec![0.0; self.system.matrix.len()]
        } else {
            self.system.v.clone()
        }
    }

    pub fn n_list(&self) -> Vec<u64> {
        if self.system.n_list.is_empty() {
            vec![self.system.n]
        } else {
            self.system.n_list.clone()
        }
    }

    pub fn w_list(&self, d: usize) -> Vec<u64> {
        if self.sieve.w_per_coord.is_empty() {
            vec![self.sieve.w; d]
        } else {
            self.sieve.w_per_coord.clone()
        }
    }

    fn check_ranges(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Parse { line: 0, column: 0, message: m });
        let s = &self.system;
        if s.matrix.is_empty() || s.matrix[0].is_empty() {
            return bad("system.matrix must be nonempty".into());
        }
        if s.matrix.iter().any(|r| r.len() != s.matrix[0].len()) {
            return bad("system.matrix rows have different lengths".into());
        }
        if !s.v.is_empty() && s.v.len() != s.matrix.len() {
            return bad(format!("system.v has length {}, expected {}", s.v.len(), s.matrix.len()));
        }
        if s.v.iter().any(|x| !x.is_finite()) {
            return bad("system.v must be finite".into());
        }
        if !(s.epsilon >= 0.0 && s.epsilon.is_finite()) {
            return bad(format!("system.epsilon = {} must be finite and nonnegative", s.epsilon));
        }
        if s.n < 2 || s.n_list.iter().any(|&n| n < 2) {
            return bad("N must be at least 2".into());
        }
        if !(s.c_bound > 0.0) {
            return bad("system.c_bound must be positive".into());
        }
        let sv = &self.sieve;
        if !(sv.gamma > 0.0 && sv.gamma < 1.0) {
            return bad(format!("sieve.gamma = {} must lie in (0, 1)", sv.gamma));
        }
        if sv.w == 0 || sv.w_per_coord.contains(&0) {
            return bad("W must be positive".into());
        }
        if !sv.w_per_coord.is_empty() && sv.w_per_coord.len() != s.matrix[0].len() {
            return bad("sieve.w_per_coord needs one modulus per variable".into());
        }
        if !(sv.eta > 0.0 && sv.eta <= 1.0) {
            return bad(format!("sieve.eta = {} must lie in (0, 1]", sv.eta));
        }
        if !(sv.delta > 0.0 && sv.delta < 1.0) {
            return bad(format!("sieve.delta = {} must lie in (0, 1)", sv.delta));
        }
        if !(sv.smooth > 0.0 && sv.smooth < 0.5) {
            return bad(format!("sieve.smooth = {} must lie in (0, 1/2)", sv.smooth));
        }
        if self.local.p_cut < 2 {
            return bad("local.p_cut must be at least 2".into());
        }
        if self.quad.samples == 0 {
            return bad("quad.samples must be positive".into());
        }
        if !(self.run.budget > 0.0) {
            return bad("run.budget must be positive".into());
        }
        let g = &self.gowers;
        if !(2..=3).contains(&g.k) {
            return bad(format!("gowers.k = {} must be 2 or 3", g.k));
        }
        if g.n_list.is_empty() || g.n_list.contains(&0) {
            return bad("gowers.n_list must be nonempty and positive".into());
        }
        let c = &self.circle;
        if c.n_list.iter().any(|&n| n < 2) || !(c.b > 0.0) || !(c.t > 0.0) {
            return bad("circle: N >= 2, b > 0 and t > 0 required".into());
        }
        if c.major_grid == 0 || c.density == 0 || c.mean_samples == 0 || c.l == 0 {
            return bad("circle grid sizes and l must be positive".into());
        }
        Ok(())
    }

    /// Parse every scalar entry now so errors point at the document.
    fn check_scalars(&self, src: &str) -> Result<(), CliError> {
        let entries = self.system.matrix.iter().flatten().chain(self.circle.row.iter());
        for e in entries {
            if let Entry::Text(t) = e {
                if let Err(AlgebraError::Parse { column, message }) = parse_scalar(t) {
                    let quoted = format!("\"{t}\"");
                    let (line, col) = src.find(&quoted).map_or((0, 0), |off| line_col(src, off + 1 + column - 1));
                    return Err(CliError::Parse { line, column: col, message: format!("in scalar {quoted}: {message}") });
                }
            }
        }
        Ok(())
    }
}
