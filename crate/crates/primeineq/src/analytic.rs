//! Gowers norms, exponential sums over primes, arc diagnostics for the circle method,
//! the diophantine approximation infimum and the transfer identity.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::algebraic::{linalg, FieldElement, Mat};
use crate::arith::bump::{e, rho, rho_mass};
use crate::arith::{local_von_mangoldt, w_tricked_lambda, PrimeTable, SeqFn, SmoothBump, Window};
use crate::counter::{self, CountError, CountOptions};
use crate::geom::pairwise_sum;
use crate::quad::{self, QuadOptions, QuadResult};

#[derive(Debug, thiserror::Error)]
pub enum AnalyticError {
    #[error("Gowers norm of order {0} is not supported (use 2 or 3)")]
    Order(usize),
    #[error("N = {n} exceeds the cap {cap} for order {k}")]
    Size { n: usize, k: usize, cap: usize },
    #[error("prime table covers {limit}, need {need}")]
    Table { need: u64, limit: u64 },
    #[error("arc thresholds are not ordered: major cut {major} must lie below T = {t}")]
    Arcs { major: f64, t: f64 },
    #[error("empty sample grid")]
    EmptyGrid,
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("{0} support combinations exceed the cap")]
    TooManyTerms(u64),
    #[error(transparent)]
    Count(#[from] CountError),
    #[error(transparent)]
    Quad(#[from] quad::QuadError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GowersMethod {
    Direct,
    FftU2,
    U3ViaU2,
    MonteCarlo,
}

#[derive(Clone, Debug, Serialize)]
pub struct GowersResult {
    pub k: usize,
    pub n: usize,
    pub value: f64,
    pub method: GowersMethod,
    /// size of the cyclic group used for the [N] embedding; 0 when not applicable
    pub n_prime: usize,
    pub std_error: f64,
}

const U2_CAP: usize = 1 << 20;
const U3_CAP: usize = 1 << 14;

/// sum_xi |F(xi)|^4 / N'^4 for the unnormalised DFT F, i.e. ||f||_{U^2(Z/N')}^4.
fn u2_fourth(planner: &mut FftPlanner<f64>, f: &[Complex64]) -> f64 {
    let np = f.len();
    let mut buf = f.to_vec();
    planner.plan_fft_forward(np).process(&mut buf);
    let q: Vec<f64> = buf.iter().map(|z| z.norm_sqr() * z.norm_sqr()).collect();
    pairwise_sum(&q) / (np as f64).powi(4)
}

/// ||f||_{U^k(Z/N'Z)}^{2^k} for k = 2, 3.
fn cyclic_power(planner: &mut FftPlanner<f64>, f: &[Complex64], k: usize, shifts: Option<&[usize]>) -> f64 {
    let np = f.len();
    match k {
        2 => u2_fourth(planner, f),
        _ => {
            let all: Vec<usize>;
            let hs = match shifts {
                Some(h) => h,
                None => {
                    all = (0..np).collect();
                    &all
                }
            };
            let vals: Vec<f64> = hs
                .iter()
                .map(|&h| {
                    let g: Vec<Complex64> = (0..np).map(|x| f[x] * f[(x + h) % np].conj()).collect();
                    u2_fourth(planner, &g)
                })
                .collect();
            pairwise_sum(&vals) / np as f64
        }
    }
}

/// ||f||_{U^k(Z/N'Z)} for a function on the whole cyclic group.
pub fn gowers_norm_cyclic(f: &[Complex64], k: usize) -> Result<f64, AnalyticError> {
    if !(2..=3).contains(&k) {
        return Err(AnalyticError::Order(k));
    }
    let mut planner = FftPlanner::new();
    Ok(cyclic_power(&mut planner, f, k, None).max(0.0).powf(1.0 / (1 << k) as f64))
}

/// ||f||_{U^k[N]} = ||f 1_[N]||_{U^k(Z/N')} / ||1_[N]||_{U^k(Z/N')}; f[i] is the value at i + 1.
pub fn gowers_norm(f: &[f64], k: usize) -> Result<GowersResult, AnalyticError> {
    gowers_norm_with(f, k, 4 * f.len())
}

pub fn gowers_norm_with(f: &[f64], k: usize, n_prime: usize) -> Result<GowersResult, AnalyticError> {
    let n = f.len();
    let cap = match k {
        2 => U2_CAP,
        3 => U3_CAP,
        _ => return Err(AnalyticError::Order(k)),
    };
    if n > cap {
        return Err(AnalyticError::Size { n, k, cap });
    }
    if n_prime < 3 * n {
        return Err(AnalyticError::Parameter(format!("N' = {n_prime} must be at least 3N")));
    }
    let mut planner = FftPlanner::new();
    let embed = |g: &dyn Fn(usize) -> f64| -> Vec<Complex64> {
        (0..n_prime).map(|x| if x < n { Complex64::new(g(x), 0.0) } else { Complex64::new(0.0, 0.0) }).collect()
    };
    // only |h| < N contributes for functions supported on [N]
    let shifts: Vec<usize> = (0..n).chain((n_prime - n + 1)..n_prime).collect();
    let num = cyclic_power(&mut planner, &embed(&|x| f[x]), k, Some(&shifts));
    let den = cyclic_power(&mut planner, &embed(&|_| 1.0), k, Some(&shifts));
    let value = (num / den).max(0.0).powf(1.0 / (1 << k) as f64);
    let method = if k == 2 { GowersMethod::FftU2 } else { GowersMethod::U3ViaU2 };
    Ok(GowersResult { k, n, value, method, n_prime, std_error: 0.0 })
}

/// The defining sum over Z, O(N^3) for k = 2 and O(N^4) for k = 3.
pub fn gowers_norm_direct(f: &[f64], k: usize) -> Result<GowersResult, AnalyticError> {
    let n = f.len() as i64;
    let at = |x: i64| if (0..n).contains(&x) { f[x as usize] } else { 0.0 };
    let power = |g: &dyn Fn(i64) -> f64| -> f64 {
        let mut s = 0.0;
        match k {
            2 => {
                for x in 0..n {
                    for h1 in -x..n - x {
                        let a = g(x) * g(x + h1);
                        if a == 0.0 {
                            continue;
                        }
                        for h2 in -x..n - x {
                            s += a * g(x + h2) * g(x + h1 + h2);
                        }
                    }
                }
            }
            _ => {
                for x in 0..n {
                    for h1 in -x..n - x {
                        for h2 in -x..n - x {
                            let a = g(x) * g(x + h1) * g(x + h2) * g(x + h1 + h2);
                            if a == 0.0 {
                                continue;
                            }
                            for h3 in -x..n - x {
                                s += a * g(x + h3) * g(x + h1 + h3) * g(x + h2 + h3) * g(x + h1 + h2 + h3);
                            }
                        }
                    }
                }
            }
        }
        s
    };
    if !(2..=3).contains(&k) {
        return Err(AnalyticError::Order(k));
    }
    let one = |x: i64| if (0..n).contains(&x) { 1.0 } else { 0.0 };
    let value = (power(&at) / power(&one)).max(0.0).powf(1.0 / (1 << k) as f64);
    Ok(GowersResult { k, n: f.len(), value, method: GowersMethod::Direct, n_prime: 0, std_error: 0.0 })
}

#[derive(Clone, Copy, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayVariant {
    /// Lambda' - Lambda_{Z/WZ}
    LocalModel { w: u64 },
    /// Lambda'_{b,W} - 1
    WTricked { w: u64, b: u64 },
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayTable {
    pub variant: DecayVariant,
    pub k: usize,
    pub rows: Vec<(usize, f64)>,
    pub strictly_decreasing: bool,
    pub final_over_initial: f64,
}

pub fn decay_function(table: &PrimeTable, variant: DecayVariant, n: usize) -> Result<Vec<f64>, AnalyticError> {
    match variant {
        DecayVariant::LocalModel { w } => {
            if table.limit() < n as u64 {
                return Err(AnalyticError::Table { need: n as u64, limit: table.limit() });
            }
            Ok((1..=n as i64).map(|x| table.lambda_prime(x as u64) - local_von_mangoldt(w, x)).collect())
        }
        DecayVariant::WTricked { w, b } => {
            let need = w * n as u64 + b;
            if table.limit() < need {
                return Err(AnalyticError::Table { need, limit: table.limit() });
            }
            (1..=n as i64)
                .map(|x| w_tricked_lambda(table, b, w, x).map(|v| v - 1.0).map_err(|e| AnalyticError::Parameter(e.to_string())))
                .collect()
        }
    }
}

/// ||f||_{U^k[N]} across N for the chosen difference function.
pub fn gowers_decay_experiment(table: &PrimeTable, variant: DecayVariant, k: usize, ns: &[usize]) -> Result<DecayTable, AnalyticError> {
    let mut rows = Vec::new();
    for &n in ns {
        let f = decay_function(table, variant, n)?;
        rows.push((n, gowers_norm(&f, k)?.value));
    }
    let strictly_decreasing = rows.windows(2).all(|w| w[1].1 < w[0].1);
    let final_over_initial = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if a.1 > 0.0 => b.1 / a.1,
        _ => f64::NAN,
    };
    Ok(DecayTable { variant, k, rows, strictly_decreasing, final_over_initial })
}

/// ||1_{[-N,N]}||_{U^k(R,N)}^{2^k} = 2^k / (k+1)!.
pub fn continuous_box_power(k: usize) -> f64 {
    let fact: f64 = (1..=k + 1).map(|i| i as f64).product();
    2f64.powi(k as i32) / fact
}

/// Monte-Carlo estimate of (2N)^{-(k+1)} int prod_omega g(x + omega . h) for g supported on [-N, N].
pub fn gowers_norm_continuous(g: &(dyn Fn(f64) -> f64 + Sync), n: f64, k: usize, opts: QuadOptions) -> Result<GowersResult, AnalyticError> {
    if !(2..=3).contains(&k) {
        return Err(AnalyticError::Order(k));
    }
    let integrand = |u: &[f64]| {
        let x = n * (2.0 * u[0] - 1.0);
        let h: Vec<f64> = u[1..].iter().map(|t| 2.0 * n * (2.0 * t - 1.0)).collect();
        let mut p = 1.0;
        for w in 0..1usize << k {
            let s: f64 = (0..k).filter(|i| w >> i & 1 == 1).map(|i| h[i]).sum();
            p *= g(x + s);
            if p == 0.0 {
                return 0.0;
            }
        }
        p
    };
    let (mean, se) = quad::qmc_mean(k + 1, opts.samples, opts.seed, integrand)?;
    // box volume 2N (4N)^k over (2N)^{k+1}
    let scale = 2f64.powi(k as i32);
    let p = scale * mean;
    let value = p.max(0.0).powf(1.0 / (1 << k) as f64);
    let std_error = if p > 0.0 { value * (scale * se) / (p * (1 << k) as f64) } else { (scale * se).powf(1.0 / (1 << k) as f64) };
    Ok(GowersResult { k, n: n as usize, value, method: GowersMethod::MonteCarlo, n_prime: 0, std_error })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvolutionNorms {
    pub eta: f64,
    /// ||f * chi||_{U^k(R, 2N)}
    pub smoothed: f64,
    pub std_error: f64,
    /// ||f||_{U^k[N]}
    pub discrete: f64,
    /// smoothed / (eta^{(k+1)/2^k} discrete)
    pub ratio: f64,
}

/// Both sides of ||f * chi||_{U^k(R,2N)} << eta^{(k+1)/2^k} ||f||_{U^k[N]}.
///
/// For eta < 1/(2(k+2)) every vertex of a contributing cube lies within 1/2 of one integer, so
/// the integral factors into the discrete Gowers sum of f times a cube integral of rho.
pub fn gowers_convolution_check(f: &[f64], k: usize, eta: f64, opts: QuadOptions) -> Result<ConvolutionNorms, AnalyticError> {
    if !(eta > 0.0 && eta < 0.5 / (k + 2) as f64) {
        return Err(AnalyticError::Parameter(format!("eta = {eta} must lie in (0, 1/(2(k+2)))")));
    }
    let n = f.len() as f64;
    let disc = gowers_norm(f, k)?;
    let one = vec![1.0; f.len()];
    let _ = one;
    // discrete cube sum of f over Z equals disc^{2^k} times that of 1_[N]
    let s1 = cube_count(f.len(), k);
    let sf = disc.value.powi(1 << k) * s1;
    // I_rho = int prod_omega rho(u + omega . t) over u in [-1,1], t in [-2,2]^k
    let cube = |u: &[f64]| {
        let x = 2.0 * u[0] - 1.0;
        let t: Vec<f64> = u[1..].iter().map(|s| 4.0 * s - 2.0).collect();
        let mut p = 1.0;
        for w in 0..1usize << k {
            let s: f64 = (0..k).filter(|i| w >> i & 1 == 1).map(|i| t[i]).sum();
            p *= rho(x + s);
            if p == 0.0 {
                return 0.0;
            }
        }
        p
    };
    let (mean, se) = quad::qmc_mean(k + 1, opts.samples, opts.seed, cube)?;
    let vol = 2.0 * 4f64.powi(k as i32);
    let i_rho = vol * mean;
    let power = sf * eta.powi(k as i32 + 1) * i_rho / (4.0 * n).powi(k as i32 + 1);
    let root = 1.0 / (1 << k) as f64;
    let smoothed = power.max(0.0).powf(root);
    let std_error = smoothed * root * se / mean.max(f64::MIN_POSITIVE);
    let ratio = smoothed / (eta.powf((k + 1) as f64 * root) * disc.value);
    Ok(ConvolutionNorms { eta, smoothed, std_error, discrete: disc.value, ratio })
}

/// Number of k-dimensional cubes inside [N], i.e. the Gowers sum of 1_[N] over Z.
fn cube_count(n: usize, k: usize) -> f64 {
    // for a fixed h the x-range has length N - sum |h_i|
    let n = n as i64;
    match k {
        2 => {
            let mut s = 0.0;
            for h1 in -(n - 1)..n {
                for h2 in -(n - 1)..n {
                    s += (n - h1.abs() - h2.abs()).max(0) as f64;
                }
            }
            s
        }
        _ => {
            // sum over (h1, h2) of sum_{h3} max(0, r - |h3|) with r = N - |h1| - |h2|
            let mut s = 0.0;
            for h1 in -(n - 1)..n {
                for h2 in -(n - 1)..n {
                    let r = n - h1.abs() - h2.abs();
                    if r > 0 {
                        s += (r * r) as f64;
                    }
                }
            }
            s
        }
    }
}

fn check_table(table: &PrimeTable, n: u64) -> Result<(), AnalyticError> {
    if table.limit() < n {
        return Err(AnalyticError::Table { need: n, limit: table.limit() });
    }
    Ok(())
}

/// f(theta) = sum_{n <= N} Lambda'(n) e(theta n).
pub fn exp_sum_f(table: &PrimeTable, theta: f64, n: u64) -> Result<Complex64, AnalyticError> {
    Ok(PrimeSum::new(table, n)?.eval(theta))
}

const SUM_CHUNK: usize = 2048;

/// The primes up to N with their logarithms, for repeated evaluation of f.
///
/// Within a chunk e(theta p) is advanced through the prime gaps by a table of e(theta g),
/// and each chunk starts from a direct evaluation, so rounding drift stays near 1e-13.
#[derive(Clone, Debug)]
pub struct PrimeSum {
    primes: Vec<u32>,
    logs: Vec<f64>,
    max_gap: usize,
}

impl PrimeSum {
    pub fn new(table: &PrimeTable, n: u64) -> Result<Self, AnalyticError> {
        check_table(table, n)?;
        let primes = table.primes_upto(n).to_vec();
        let logs = primes.iter().map(|&p| (p as f64).ln()).collect();
        let max_gap = primes.windows(2).map(|w| (w[1] - w[0]) as usize).max().unwrap_or(0);
        Ok(PrimeSum { primes, logs, max_gap })
    }

    /// theta(N) = f(0)
    pub fn mass(&self) -> f64 {
        pairwise_sum(&self.logs)
    }

    pub fn eval(&self, theta: f64) -> Complex64 {
        if theta == 0.0 {
            return Complex64::new(self.mass(), 0.0);
        }
        let steps: Vec<Complex64> = (0..=self.max_gap).map(|g| e(theta * g as f64)).collect();
        let parts: Vec<Complex64> = self
            .primes
            .par_chunks(SUM_CHUNK)
            .zip(self.logs.par_chunks(SUM_CHUNK))
            .map(|(ps, ls)| {
                let mut z = e((theta * ps[0] as f64).rem_euclid(1.0));
                let mut re = 0.0;
                let mut im = 0.0;
                for i in 0..ps.len() {
                    re += ls[i] * z.re;
                    im += ls[i] * z.im;
                    if i + 1 < ps.len() {
                        z *= steps[(ps[i + 1] - ps[i]) as usize];
                    }
                }
                Complex64::new(re, im)
            })
            .collect();
        let re: Vec<f64> = parts.iter().map(|p| p.re).collect();
        let im: Vec<f64> = parts.iter().map(|p| p.im).collect();
        Complex64::new(pairwise_sum(&re), pairwise_sum(&im))
    }
}

/// f(j/M) for j = 0..M, by folding n mod M and one inverse FFT.
pub fn exp_sum_grid(table: &PrimeTable, n: u64, m: usize) -> Result<Vec<Complex64>, AnalyticError> {
    check_table(table, n)?;
    if m == 0 {
        return Err(AnalyticError::EmptyGrid);
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for &p in table.primes_upto(n) {
        buf[p as usize % m] += (p as f64).ln();
    }
    FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
    Ok(buf)
}

/// v(beta) = int_0^N e(beta x) dx = e(beta N / 2) sin(pi beta N) / (pi beta).
pub fn fejer_v(beta: f64, n: f64) -> Complex64 {
    let x = PI * beta * n;
    let amp = if x.abs() < 1e-8 { n * (1.0 - x * x / 6.0) } else { x.sin() / (PI * beta) };
    e(beta * n / 2.0) * amp
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Arc {
    Major,
    Minor,
    Trivial,
}

/// Major arc ||alpha|| < log^B N / N, minor arc up to T, trivial arc beyond.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ArcDecomposition {
    pub n: u64,
    pub b: f64,
    pub t: f64,
    pub major_cut: f64,
}

impl ArcDecomposition {
    pub fn new(n: u64, b: f64, t: f64) -> Result<Self, AnalyticError> {
        let major_cut = (n as f64).ln().powf(b) / n as f64;
        if !(major_cut < t) {
            return Err(AnalyticError::Arcs { major: major_cut, t });
        }
        Ok(ArcDecomposition { n, b, t, major_cut })
    }
    pub fn classify(&self, alpha: &[f64]) -> Arc {
        let s = alpha.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if s < self.major_cut {
            Arc::Major
        } else if s <= self.t {
            Arc::Minor
        } else {
            Arc::Trivial
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MajorArcReport {
    pub n: u64,
    pub major_cut: f64,
    /// (theta, |f(theta) - v(theta)| / N)
    pub rows: Vec<(f64, f64)>,
    pub sup: f64,
    pub mean: f64,
}

/// Samples |f(theta) - v(theta)| / N on [0, cut); negative theta give the same values by conjugation.
pub fn major_arc_compare(table: &PrimeTable, n: u64, b: f64, grid: usize) -> Result<MajorArcReport, AnalyticError> {
    check_table(table, n)?;
    if grid == 0 {
        return Err(AnalyticError::EmptyGrid);
    }
    let cut = (n as f64).ln().powf(b) / n as f64;
    let ps = PrimeSum::new(table, n)?;
    let rows: Vec<(f64, f64)> = (0..grid)
        .map(|i| {
            let th = cut * i as f64 / grid as f64;
            (th, (ps.eval(th) - fejer_v(th, n as f64)).norm() / n as f64)
        })
        .collect();
    let sup = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let mean = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    Ok(MajorArcReport { n, major_cut: cut, rows, sup, mean })
}

#[derive(Clone, Debug, Serialize)]
pub struct MinorArcReport {
    pub n: u64,
    /// a lower bound for sup over the minor arc of prod_j |f((L^T alpha)_j)| / N^d
    pub sup_lower_bound: f64,
    pub argmax: Vec<f64>,
    pub evaluated: usize,
}

fn prod_f(ps: &PrimeSum, l: &[Vec<f64>], alpha: &[f64], n: f64) -> f64 {
    let d = l.first().map_or(0, |r| r.len());
    let mut p = 1.0;
    for j in 0..d {
        let th: f64 = (0..l.len()).map(|i| alpha[i] * l[i][j]).sum();
        p *= ps.eval(th).norm() / n;
    }
    p
}

/// Grid over [-T, T]^m restricted to the minor arc, then golden-section refinement of the best points.
pub fn minor_arc_sup(table: &PrimeTable, l: &[Vec<f64>], n: u64, b: f64, t: f64, density: usize) -> Result<MinorArcReport, AnalyticError> {
    check_table(table, n)?;
    let arcs = ArcDecomposition::new(n, b, t)?;
    let m = l.len();
    if density == 0 || m == 0 {
        return Err(AnalyticError::EmptyGrid);
    }
    let ps = PrimeSum::new(table, n)?;
    let nf = n as f64;
    let step = 2.0 * t / density as f64;
    let total = (density + 1).pow(m as u32);
    let mut pts: Vec<Vec<f64>> = Vec::new();
    for idx in 0..total {
        let mut r = idx;
        let a: Vec<f64> = (0..m)
            .map(|_| {
                let c = r % (density + 1);
                r /= density + 1;
                -t + step * c as f64
            })
            .collect();
        if arcs.classify(&a) == Arc::Minor {
            pts.push(a);
        }
    }
    // the inner edge of the minor arc, along each axis
    for i in 0..m {
        for s in [-1.0, 1.0] {
            let mut a = vec![0.0; m];
            a[i] = s * arcs.major_cut;
            pts.push(a);
        }
    }
    if pts.is_empty() {
        return Err(AnalyticError::EmptyGrid);
    }
    let mut vals: Vec<(f64, usize)> = pts.par_iter().enumerate().map(|(i, a)| (prod_f(&ps, l, a, nf), i)).collect();
    vals.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut evaluated = pts.len();
    let mut best = (vals[0].0, pts[vals[0].1].clone());
    let gr = (5f64.sqrt() - 1.0) / 2.0;
    for &(_, i) in vals.iter().take(8) {
        let mut a = pts[i].clone();
        for _round in 0..3 {
            for c in 0..m {
                let (mut lo, mut hi) = (a[c] - step, a[c] + step);
                let eval = |x: f64, a: &[f64]| {
                    let mut b = a.to_vec();
                    b[c] = x;
                    if arcs.classify(&b) == Arc::Minor {
                        prod_f(&ps, l, &b, nf)
                    } else {
                        -1.0
                    }
                };
                let mut x1 = hi - gr * (hi - lo);
                let mut x2 = lo + gr * (hi - lo);
                let (mut f1, mut f2) = (eval(x1, &a), eval(x2, &a));
                for _ in 0..24 {
                    if f1 > f2 {
                        hi = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = hi - gr * (hi - lo);
                        f1 = eval(x1, &a);
                    } else {
                        lo = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = lo + gr * (hi - lo);
                        f2 = eval(x2, &a);
                    }
                    evaluated += 1;
                }
                let (x, fx) = if f1 > f2 { (x1, f1) } else { (x2, f2) };
                if fx > best.0 {
                    best = (fx, {
                        let mut b = a.clone();
                        b[c] = x;
                        b
                    });
                }
                if fx > eval(a[c], &a) {
                    a[c] = x;
                }
            }
        }
    }
    Ok(MinorArcReport { n, sup_lower_bound: best.0, argmax: best.1, evaluated })
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Clone, Debug, Serialize)]
pub struct MeanValue {
    /// int_U |prod_j f((L^T alpha)_j)|^l d alpha / N^{dl - m}
    pub ratio: QuadResult,
    pub condition_holds: bool,
}

/// Importance-sampled mean value integral over the box U: an equal mixture of the uniform
/// density on U and a product of Cauchy densities of scale 1/N centred at 0.
#[allow(clippy::too_many_arguments)]
pub fn mean_value_estimate(
    table: &PrimeTable,
    l: &[Vec<f64>],
    n: u64,
    lpow: u32,
    u_lo: &[f64],
    u_hi: &[f64],
    opts: QuadOptions,
) -> Result<MeanValue, AnalyticError> {
    check_table(table, n)?;
    let m = l.len();
    let d = l.first().map_or(0, |r| r.len());
    if u_lo.len() != m || u_hi.len() != m || u_lo.iter().zip(u_hi).any(|(a, b)| b <= a) {
        return Err(AnalyticError::Parameter("U must be a nonempty box in R^m".into()));
    }
    let condition_holds = binom(d, m) * lpow as f64 > 2.0 * binom(d - 1, m - 1);
    let ps = PrimeSum::new(table, n)?;
    let nf = n as f64;
    let s = 1.0 / nf;
    let vol: f64 = u_lo.iter().zip(u_hi).map(|(a, b)| b - a).product();
    let integrand = |u: &[f64]| {
        let alpha: Vec<f64> = if u[0] < 0.5 {
            (0..m).map(|i| u_lo[i] + (u_hi[i] - u_lo[i]) * u[i + 1]).collect()
        } else {
            (0..m).map(|i| s * (PI * (u[i + 1] - 0.5)).tan()).collect()
        };
        if alpha.iter().zip(u_lo.iter().zip(u_hi)).any(|(a, (lo, hi))| a < lo || a > hi) {
            return 0.0;
        }
        let cauchy: f64 = alpha.iter().map(|a| s / (PI * (a * a + s * s))).product();
        let dens = 0.5 / vol + 0.5 * cauchy;
        // |prod f|^l / N^{dl} computed as a product of |f|/N
        prod_f(&ps, l, &alpha, nf).powi(lpow as i32) / dens
    };
    let (mean, se) = quad::qmc_mean(m + 1, opts.samples, opts.seed, integrand)?;
    let scale = nf.powi(m as i32);
    Ok(MeanValue {
        ratio: QuadResult { value: mean * scale, std_error: se * scale, method: quad::QuadMethod::MonteCarlo, samples: opts.samples, seed: opts.seed },
        condition_holds,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DiophantineInf {
    pub value: f64,
    pub argmin: Vec<f64>,
    pub evaluated: usize,
}

fn dist_z(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// inf over t1 <= ||beta||_inf <= t2 of max_j dist((L^T beta)_j, Z), an upper bound from a grid
/// over [-t2, t2]^m and pattern-search refinement.
pub fn diophantine_inf(l: &[Vec<f64>], t1: f64, t2: f64, density: usize) -> Result<DiophantineInf, AnalyticError> {
    if !(0.0 < t1 && t1 < t2) {
        return Err(AnalyticError::Parameter(format!("need 0 < t1 < t2, got {t1}, {t2}")));
    }
    let m = l.len();
    if density == 0 || m == 0 {
        return Err(AnalyticError::EmptyGrid);
    }
    let h = l[0].len();
    let phi = |b: &[f64]| -> f64 { (0..h).map(|j| dist_z((0..m).map(|i| b[i] * l[i][j]).sum())).fold(0.0, f64::max) };
    let inside = |b: &[f64]| {
        let s = b.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        s >= t1 && s <= t2
    };
    let step = 2.0 * t2 / density as f64;
    let total = (density + 1).pow(m as u32);
    let mut cands: Vec<(f64, Vec<f64>)> = (0..total)
        .into_par_iter()
        .filter_map(|idx| {
            let mut r = idx;
            let b: Vec<f64> = (0..m)
                .map(|_| {
                    let c = r % (density + 1);
                    r /= density + 1;
                    -t2 + step * c as f64
                })
                .collect();
            inside(&b).then(|| (phi(&b), b))
        })
        .collect();
    if cands.is_empty() {
        return Err(AnalyticError::EmptyGrid);
    }
    let mut evaluated = cands.len();
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = cands[0].clone();
    for (v0, b0) in cands.into_iter().take(16) {
        let (mut v, mut b) = (v0, b0);
        let mut s = step;
        while s > 1e-13 {
            let mut moved = false;
            for c in 0..m {
                for dir in [-1.0, 1.0] {
                    let mut t = b.clone();
                    t[c] += dir * s;
                    if inside(&t) {
                        let vt = phi(&t);
                        evaluated += 1;
                        if vt < v {
                            v = vt;
                            b = t;
                            moved = true;
                        }
                    }
                }
            }
            if !moved {
                s /= 2.0;
            }
        }
        if v < best.0 {
            best = (v, b);
        }
    }
    Ok(DiophantineInf { value: best.0, argmin: best.1, evaluated })
}

#[derive(Clone, Debug, Serialize)]
pub struct TransferCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
    pub eta: f64,
    /// numerical Lipschitz constant of F and G, sigma^{-1}
    pub sigma_inv: f64,
    /// eta sigma^{-1}, the size of the error term
    pub scale: f64,
    /// C_chi = eta^{-d} (int chi)^d = (int rho)^d
    pub c_chi: f64,
    pub terms: usize,
}

fn lipschitz(w: &Window) -> f64 {
    w.profiles
        .iter()
        .map(|p| {
            if p.is_sharp() {
                return f64::INFINITY;
            }
            let (a, b) = p.support();
            let k = 20_000;
            let hstep = (b - a) / k as f64;
            (0..k).map(|i| ((p.eval(a + (i + 1) as f64 * hstep) - p.eval(a + i as f64 * hstep)) / hstep).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

const TRANSFER_TERMS: u64 = 1_000_000;

/// T(f) against (C_chi eta^d)^{-1} T~(f * chi) for finitely supported f_j.
#[allow(clippy::too_many_arguments)]
pub fn transfer_check(
    fs: &[&SeqFn],
    f: &Window,
    g: &Window,
    l: &Mat<FieldElement>,
    v: &[f64],
    n: u64,
    eta: f64,
    qopts: QuadOptions,
    copts: CountOptions,
) -> Result<TransferCheck, AnalyticError> {
    let d = fs.len();
    let m = l.len();
    if !(eta > 0.0) {
        return Err(AnalyticError::Parameter("eta must be positive".into()));
    }
    let lhs = counter::t_discrete(fs, f, g, l, v, n, copts)?;
    let lf = linalg::approx_matrix(l);
    let nf = n as f64;
    let chi = SmoothBump { eta };
    let (flo, fhi) = f.support();
    let (glo, ghi) = g.support();
    // support points that can reach the F window after smoothing
    let supp: Vec<Vec<(i64, f64)>> = fs
        .iter()
        .enumerate()
        .map(|(j, s)| {
            s.support_points()
                .into_iter()
                .filter(|&x| (x as f64 + eta) / nf >= flo[j] && (x as f64 - eta) / nf <= fhi[j])
                .map(|x| (x, s.get(x)))
                .collect()
        })
        .collect();
    let combos: f64 = supp.iter().map(|s| s.len() as f64).product();
    if combos > TRANSFER_TERMS as f64 {
        return Err(AnalyticError::TooManyTerms(combos as u64));
    }
    let pad: Vec<f64> = lf.iter().map(|r| eta * r.iter().map(|x| x.abs()).sum::<f64>()).collect();
    // tail ranges of sum_{j >= k} L_ij n_j for pruning
    let mut tail = vec![vec![(0.0, 0.0); m]; d + 1];
    for k in (0..d).rev() {
        for i in 0..m {
            let (lo, hi) = supp[k].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, _)| {
                let t = lf[i][k] * x as f64;
                (lo.min(t), hi.max(t))
            });
            let (lo, hi) = if supp[k].is_empty() { (0.0, 0.0) } else { (lo, hi) };
            tail[k][i] = (tail[k + 1][i].0 + lo, tail[k + 1][i].1 + hi);
        }
    }
    let mut pts: Vec<(Vec<i64>, f64)> = Vec::new();
    let mut cur: Vec<i64> = Vec::new();
    fn rec(
        k: usize,
        partial: &mut Vec<f64>,
        weight: f64,
        cur: &mut Vec<i64>,
        ctx: &(&[Vec<(i64, f64)>], &[Vec<f64>], &[f64], &[f64], &[f64], &[f64], &[Vec<(f64, f64)>]),
        out: &mut Vec<(Vec<i64>, f64)>,
    ) {
        let (supp, lf, v, glo, ghi, pad, tail) = *ctx;
        let m = lf.len();
        for i in 0..m {
            let lo = partial[i] + tail[k][i].0 + v[i];
            let hi = partial[i] + tail[k][i].1 + v[i];
            if hi < glo[i] - pad[i] || lo > ghi[i] + pad[i] {
                return;
            }
        }
        if k == supp.len() {
            out.push((cur.clone(), weight));
            return;
        }
        for &(x, w) in &supp[k] {
            for i in 0..m {
                partial[i] += lf[i][k] * x as f64;
            }
            cur.push(x);
            rec(k + 1, partial, weight * w, cur, ctx, out);
            cur.pop();
            for i in 0..m {
                partial[i] -= lf[i][k] * x as f64;
            }
        }
    }
    let ctx = (supp.as_slice(), lf.as_slice(), v, glo.as_slice(), ghi.as_slice(), pad.as_slice(), tail.as_slice());
    rec(0, &mut vec![0.0; m], 1.0, &mut cur, &ctx, &mut pts);
    // each term: int over u in [-eta, eta]^d of prod chi(u_j) F((p + u)/N) G(L (p + u) + v)
    let vals: Vec<f64> = pts
        .iter()
        .map(|(p, w)| {
            let integrand = |u: &[f64]| {
                let x: Vec<f64> = p.iter().zip(u).map(|(&pj, &uj)| pj as f64 + eta * (2.0 * uj - 1.0)).collect();
                let mut c = 1.0;
                for (xj, &pj) in x.iter().zip(p) {
                    c *= chi.eval(xj - pj as f64);
                }
                if c == 0.0 {
                    return 0.0;
                }
                let y: Vec<f64> = x.iter().map(|t| t / nf).collect();
                let z: Vec<f64> = lf.iter().zip(v).map(|(r, vi)| r.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + vi).collect();
                c * f.eval(&y) * g.eval(&z)
            };
            let (mean, _) = quad::qmc_mean(d, qopts.samples, qopts.seed, integrand).expect("dimension checked by caller");
            w * mean * (2.0 * eta).powi(d as i32)
        })
        .collect();
    let c_chi = rho_mass().powi(d as i32);
    let tt = pairwise_sum(&vals) / nf.powi((d - m) as i32);
    let rhs = tt / (c_chi * eta.powi(d as i32));
    let sigma_inv = lipschitz(f).max(lipschitz(g));
    Ok(TransferCheck { lhs, rhs, diff: (lhs - rhs).abs(), eta, sigma_inv, scale: eta * sigma_inv, c_chi, terms: pts.len() })
}
