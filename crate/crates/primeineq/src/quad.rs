//! Continuous integrals: singular integrals, box constants, the continuous T form,
//! and a numerical Poisson summation check.
//!
//! Quadrature is randomised quasi-Monte-Carlo: 16 independent digit-scrambled Halton
//! sequences, error bars from their spread.

use num_complex::Complex64;
use rand::{seq::SliceRandom, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebraic::{IMat, Mat};
use crate::algebraic::linalg;
use crate::arith::{SmoothBump, Window};
use crate::forms::AffineWindow;
use crate::geom;
use num_traits::ToPrimitive;

pub const MAX_DIM: usize = 12;
const SCRAMBLES: usize = 16;
const PRIMES: [u64; MAX_DIM] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum QuadError {
    #[error("integration dimension {0} exceeds the cap of 12")]
    Dimension(usize),
    #[error("no invertible square submatrix")]
    NoInvertibleMinor,
    #[error("integration region is unbounded")]
    Unbounded,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("dual sum did not settle below {tol} within radius {radius}")]
    Truncation { tol: f64, radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadMethod {
    ClosedForm,
    Grid,
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub std_error: f64,
    pub method: QuadMethod,
    pub samples: u64,
    pub seed: u64,
}

impl QuadResult {
    pub fn exact(value: f64) -> Self {
        QuadResult { value, std_error: 0.0, method: QuadMethod::ClosedForm, samples: 0, seed: 0 }
    }
    fn scaled(mut self, s: f64) -> Self {
        self.value *= s;
        self.std_error *= s.abs();
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadOptions {
    pub samples: u64,
    pub seed: u64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { samples: 1 << 20, seed: 0x5eed }
    }
}

/// One scrambled radical-inverse sequence: a random digit permutation per (dimension, digit).
struct Scramble {
    perms: Vec<Vec<Vec<u8>>>,
}

fn digits_for(b: u64) -> usize {
    (53.0 * 2f64.ln() / (b as f64).ln()).ceil() as usize
}

impl Scramble {
    fn new(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let perms = PRIMES[..dim]
            .iter()
            .map(|&b| {
                (0..digits_for(b))
                    .map(|_| {
                        let mut p: Vec<u8> = (0..b as u8).collect();
                        p.shuffle(rng);
                        p
                    })
                    .collect()
            })
            .collect();
        Scramble { perms }
    }

    fn point(&self, mut idx: u64, out: &mut [f64]) {
        let i0 = idx;
        for (k, perms) in self.perms.iter().enumerate() {
            let b = PRIMES[k];
            idx = i0;
            let inv = 1.0 / b as f64;
            let mut scale = inv;
            let mut x = 0.0;
            for p in perms {
                let dgt = (idx % b) as usize;
                idx /= b;
                x += p[dgt] as f64 * scale;
                scale *= inv;
            }
            out[k] = x.min(1.0 - f64::EPSILON);
        }
    }
}

/// Mean of f over [0,1]^dim with its standard error across scrambles.
pub fn qmc_mean(dim: usize, samples: u64, seed: u64, f: impl Fn(&[f64]) -> f64 + Sync) -> Result<(f64, f64), QuadError> {
    if dim > MAX_DIM {
        return Err(QuadError::Dimension(dim));
    }
    if dim == 0 {
        return Ok((f(&[]), 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scr: Vec<Scramble> = (0..SCRAMBLES).map(|_| Scramble::new(dim, &mut rng)).collect();
    let per = samples.div_ceil(SCRAMBLES as u64).max(1);
    const CHUNK: u64 = 4096;
    let means: Vec<f64> = scr
        .par_iter()
        .map(|s| {
            let mut buf = vec![0.0; dim];
            let mut chunks = Vec::with_capacity((per / CHUNK + 1) as usize);
            let mut i = 1;
            while i <= per {
                let end = (i + CHUNK).min(per + 1);
                let mut acc = 0.0;
                for j in i..end {
                    s.point(j, &mut buf);
                    acc += f(&buf);
                }
                chunks.push(acc);
                i = end;
            }
            geom::pairwise_sum(&chunks) / per as f64
        })
        .collect();
    let k = means.len() as f64;
    let mean = geom::pairwise_sum(&means) / k;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (k - 1.0);
    Ok((mean, (var / k).sqrt()))
}

fn det_f64(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a = m.to_vec();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    det
}

fn inverse_f64(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.iter().enumerate().map(|(i, r)| {
        let mut r = r.clone();
        r.extend((0..n).map(|j| (i == j) as u8 as f64));
        r
    }).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(p, c);
        let d = a[c][c];
        a[c].iter_mut().for_each(|x| *x /= d);
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Columns of an m-row matrix whose square submatrix has the largest |det|.
pub fn best_minor(l: &[Vec<f64>]) -> Result<Vec<usize>, QuadError> {
    let m = l.len();
    let d = l.first().map_or(0, |r| r.len());
    let mut best = (0.0, Vec::new());
    for cols in subsets(d, m) {
        let sub: Vec<Vec<f64>> = l.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect();
        let dt = det_f64(&sub).abs();
        if dt > best.0 {
            best = (dt, cols);
        }
    }
    if best.0 <= 1e-12 && m > 0 {
        return Err(QuadError::NoInvertibleMinor);
    }
    Ok(best.1)
}

fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// C_{L,v/N} = vol(M^{-1}[-1,1]^m) * vol{y in [0,1]^{d-m} : -(M^{-1}L_rest y + M^{-1}v/N) in [0,1]^m},
/// with M the best-conditioned column minor.
pub fn box_constant_cl(l: &[Vec<f64>], v: &[f64], n: f64, opts: QuadOptions) -> Result<QuadResult, QuadError> {
    let cols = best_minor(l)?;
    box_constant_cl_with(l, v, n, &cols, opts)
}

/// As `box_constant_cl`, with the invertible minor given by its columns.
pub fn box_constant_cl_with(l: &[Vec<f64>], v: &[f64], n: f64, cols: &[usize], opts: QuadOptions) -> Result<QuadResult, QuadError> {
    let m = l.len();
    let d = l.first().map_or(0, |r| r.len());
    if v.len() != m || cols.len() != m {
        return Err(QuadError::Shape("v or minor columns".into()));
    }
    let mm: Vec<Vec<f64>> = l.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect();
    let det = det_f64(&mm);
    if det.abs() <= 1e-12 {
        return Err(QuadError::NoInvertibleMinor);
    }
    let minv = inverse_f64(&mm);
    let rest: Vec<usize> = (0..d).filter(|c| !cols.contains(c)).collect();
    let a: Vec<Vec<f64>> = rest.iter().map(|&j| matvec(&minv, &l.iter().map(|r| r[j]).collect::<Vec<_>>())).collect();
    let shift: Vec<f64> = matvec(&minv, &v.iter().map(|x| x / n).collect::<Vec<_>>());
    let vol = 2f64.powi(m as i32) / det.abs();
    let inside = |y: &[f64]| -> f64 {
        (0..m).all(|i| {
            let t = -(a.iter().zip(y).map(|(aj, yj)| aj[i] * yj).sum::<f64>()) - shift[i];
            (0.0..=1.0).contains(&t)
        }) as u8 as f64
    };
    if rest.is_empty() {
        return Ok(QuadResult::exact(vol * inside(&[])));
    }
    let (mean, se) = qmc_mean(rest.len(), opts.samples, opts.seed, inside)?;
    Ok(QuadResult { value: vol * mean, std_error: vol * se, method: QuadMethod::MonteCarlo, samples: opts.samples, seed: opts.seed })
}

/// int over [0,N]^d of 1_{[-eps,eps]^m}(L x + v), estimated without the boundary
/// approximation: x_M is sampled from the preimage parallelotope of the eps-cube.
pub fn box_integral_direct(l: &[Vec<f64>], v: &[f64], eps: f64, n: f64, opts: QuadOptions) -> Result<QuadResult, QuadError> {
    let m = l.len();
    let d = l.first().map_or(0, |r| r.len());
    // interval hull of L [0,N]^d + v, row by row
    let mut vacuous = true;
    for (row, vi) in l.iter().zip(v) {
        let lo = vi + row.iter().map(|a| a.min(0.0) * n).sum::<f64>();
        let hi = vi + row.iter().map(|a| a.max(0.0) * n).sum::<f64>();
        if hi < -eps || lo > eps {
            return Ok(QuadResult::exact(0.0));
        }
        vacuous &= lo >= -eps && hi <= eps;
    }
    if vacuous {
        return Ok(QuadResult::exact(n.powi(d as i32)));
    }
    let cols = best_minor(l)?;
    if d > MAX_DIM {
        return Err(QuadError::Dimension(d));
    }
    let mm: Vec<Vec<f64>> = l.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect();
    let minv = inverse_f64(&mm);
    let det = det_f64(&mm).abs();
    let rest: Vec<usize> = (0..d).filter(|c| !cols.contains(c)).collect();
    let k = rest.len();
    let f = |u: &[f64]| -> f64 {
        // u[..k] -> y in [0,N]^k, u[k..] -> z in [-eps,eps]^m
        let mut t: Vec<f64> = (0..m).map(|i| eps * (2.0 * u[k + i] - 1.0) - v[i]).collect();
        for (j, &c) in rest.iter().enumerate() {
            let y = n * u[j];
            for i in 0..m {
                t[i] -= l[i][c] * y;
            }
        }
        let x = matvec(&minv, &t);
        x.iter().all(|xi| (0.0..=n).contains(xi)) as u8 as f64
    };
    let (mean, se) = qmc_mean(d, opts.samples, opts.seed, f)?;
    let vol = n.powi(k as i32) * (2.0 * eps).powi(m as i32) / det;
    Ok(QuadResult { value: vol * mean, std_error: vol * se, method: QuadMethod::MonteCarlo, samples: opts.samples, seed: opts.seed })
}

/// int_{R^h} w(x) g(L' x + v') dx where w is supported in {A x <= b} and g in the box [zlo, zhi].
struct Affine<'a> {
    h: usize,
    lp: Vec<Vec<f64>>,
    vp: Vec<f64>,
    weight: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    gz: &'a (dyn Fn(&[f64]) -> f64 + Sync),
    zlo: Vec<f64>,
    zhi: Vec<f64>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
}

fn lp_range(a: &[Vec<f64>], b: &[f64], h: usize, obj: &[f64]) -> Result<(f64, f64), QuadError> {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    let mut out = [0.0; 2];
    for (k, dir) in [OptimizationDirection::Minimize, OptimizationDirection::Maximize].into_iter().enumerate() {
        let mut p = Problem::new(dir);
        let vars: Vec<_> = (0..h).map(|j| p.add_var(obj[j], (f64::NEG_INFINITY, f64::INFINITY))).collect();
        for (row, bi) in a.iter().zip(b) {
            let terms: Vec<_> = vars.iter().zip(row).filter(|(_, c)| **c != 0.0).map(|(v, c)| (*v, *c)).collect();
            p.add_constraint(terms.as_slice(), ComparisonOp::Le, *bi);
        }
        match p.solve() {
            Ok(s) => out[k] = s.objective(),
            Err(minilp::Error::Infeasible) => return Ok((0.0, 0.0)),
            Err(_) => return Err(QuadError::Unbounded),
        }
    }
    Ok((out[0], out[1]))
}

impl Affine<'_> {
    fn integrate(&self, opts: QuadOptions) -> Result<QuadResult, QuadError> {
        let (h, mp) = (self.h, self.lp.len());
        if self.zlo.iter().zip(&self.zhi).any(|(a, b)| b <= a) {
            return Ok(QuadResult::exact(0.0));
        }
        let cols = if mp == 0 { Vec::new() } else { best_minor(&self.lp)? };
        let rest: Vec<usize> = (0..h).filter(|c| !cols.contains(c)).collect();
        // the support constraints, with the window on L' x + v' added
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        for i in 0..mp {
            a.push(self.lp[i].clone());
            b.push(self.zhi[i] - self.vp[i]);
            a.push(self.lp[i].iter().map(|x| -x).collect());
            b.push(self.vp[i] - self.zlo[i]);
        }
        let mut ylo = Vec::new();
        let mut yhi = Vec::new();
        for &c in &rest {
            let e: Vec<f64> = (0..h).map(|j| (j == c) as u8 as f64).collect();
            let (lo, hi) = lp_range(&a, &b, h, &e)?;
            if hi <= lo {
                return Ok(QuadResult::exact(0.0));
            }
            ylo.push(lo);
            yhi.push(hi);
        }
        let mm: Vec<Vec<f64>> = self.lp.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect();
        let (minv, det) = if mp == 0 { (Vec::new(), 1.0) } else { (inverse_f64(&mm), det_f64(&mm).abs()) };
        let k = rest.len();
        let f = |u: &[f64]| -> f64 {
            let mut x = vec![0.0; h];
            for (j, &c) in rest.iter().enumerate() {
                x[c] = ylo[j] + (yhi[j] - ylo[j]) * u[j];
            }
            let z: Vec<f64> = (0..mp).map(|i| self.zlo[i] + (self.zhi[i] - self.zlo[i]) * u[k + i]).collect();
            let gv = (self.gz)(&z);
            if gv == 0.0 {
                return 0.0;
            }
            let t: Vec<f64> = (0..mp).map(|i| z[i] - self.vp[i] - rest.iter().map(|&c| self.lp[i][c] * x[c]).sum::<f64>()).collect();
            let xm = matvec(&minv, &t);
            for (j, &c) in cols.iter().enumerate() {
                x[c] = xm[j];
            }
            gv * (self.weight)(&x)
        };
        let vol = ylo.iter().zip(&yhi).map(|(a, b)| b - a).product::<f64>()
            * self.zlo.iter().zip(&self.zhi).map(|(a, b)| b - a).product::<f64>()
            / det;
        let (mean, se) = qmc_mean(h, opts.samples, opts.seed, f)?;
        Ok(QuadResult { value: vol * mean, std_error: vol * se, method: QuadMethod::MonteCarlo, samples: opts.samples, seed: opts.seed })
    }
}

/// Constraints A x <= b for lo <= M x + c <= hi.
fn box_constraints(m: &[Vec<f64>], c: &[f64], lo: &[f64], hi: &[f64], a: &mut Vec<Vec<f64>>, b: &mut Vec<f64>) {
    for (i, row) in m.iter().enumerate() {
        a.push(row.clone());
        b.push(hi[i] - c[i]);
        a.push(row.iter().map(|x| -x).collect());
        b.push(c[i] - lo[i]);
    }
}

/// Bounding box of {y : base(c + P y) != 0}.
fn affine_window_box(g: &AffineWindow) -> Result<(Vec<f64>, Vec<f64>), QuadError> {
    let k = g.dim();
    let (lo, hi) = g.base.support();
    let mut a = Vec::new();
    let mut b = Vec::new();
    box_constraints(&g.matrix, &g.offset, &lo, &hi, &mut a, &mut b);
    let mut zlo = Vec::new();
    let mut zhi = Vec::new();
    for i in 0..k {
        let e: Vec<f64> = (0..k).map(|j| (j == i) as u8 as f64).collect();
        let (l, h) = lp_range(&a, &b, k, &e)?;
        zlo.push(l);
        zhi.push(h);
    }
    Ok((zlo, zhi))
}

fn is_zero_window(w: &Window) -> bool {
    w.profiles.iter().any(|p| {
        let (a, b) = p.support();
        b <= a
    })
}

/// J = N^{-(h-m')} int_{R^h} F((Xi x + r)/N) G(L' x + v') dx.
#[allow(clippy::too_many_arguments)]
pub fn singular_integral_j(
    f: &Window,
    g: &AffineWindow,
    l_prime: &Mat<crate::algebraic::FieldElement>,
    v_prime: &[f64],
    xi: &IMat,
    r_tilde: &[i64],
    n: u64,
    opts: QuadOptions,
) -> Result<QuadResult, QuadError> {
    let xif: Vec<Vec<f64>> = xi.iter().map(|r| r.iter().map(|x| x.to_f64().unwrap()).collect()).collect();
    let r: Vec<f64> = r_tilde.iter().map(|&x| x as f64).collect();
    let lpf = linalg::approx_matrix(l_prime);
    let h = xif.first().map_or(0, |r| r.len());
    let mp = lpf.len();
    let nf = n as f64;
    if is_zero_window(&g.base) || is_zero_window(f) {
        return Ok(QuadResult::exact(0.0));
    }
    if h > MAX_DIM {
        return Err(QuadError::Dimension(h));
    }
    let (flo, fhi) = f.support();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let scaled: Vec<Vec<f64>> = xif.iter().map(|row| row.iter().map(|x| x / nf).collect()).collect();
    let c: Vec<f64> = r.iter().map(|x| x / nf).collect();
    box_constraints(&scaled, &c, &flo, &fhi, &mut a, &mut b);
    let (zlo, zhi) = if mp == 0 { (Vec::new(), Vec::new()) } else { affine_window_box(g)? };
    let gconst = if mp == 0 { g.eval(&[]) } else { 1.0 };
    let weight = |x: &[f64]| {
        let y: Vec<f64> = xif.iter().zip(&r).map(|(row, ri)| (row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>() + ri) / nf).collect();
        f.eval(&y) * gconst
    };
    let gz = |z: &[f64]| g.eval(z);
    let prob = Affine { h, lp: lpf, vp: v_prime.to_vec(), weight: &weight, gz: &gz, zlo, zhi, a, b };
    Ok(prob.integrate(opts)?.scaled(nf.powi(-((h - mp) as i32))))
}

/// Overlap volume in the trivial case h = m, Xi = L = identity with box windows.
pub fn box_overlap_volume(f: &Window, g: &Window, v: &[f64], r: &[f64], n: f64) -> f64 {
    let (flo, fhi) = f.support();
    let (glo, ghi) = g.support();
    (0..flo.len())
        .map(|i| {
            let lo = (n * flo[i] - r[i]).max(glo[i] - v[i]);
            let hi = (n * fhi[i] - r[i]).min(ghi[i] - v[i]);
            (hi - lo).max(0.0)
        })
        .product()
}

pub type Weight1<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

/// T~ = N^{-(d-m)} int prod g_j(x_j) F(x/N) G(L x + v) dx.
pub fn continuous_t(gs: &[Weight1], f: &Window, g: &Window, l: &[Vec<f64>], v: &[f64], n: f64, opts: QuadOptions) -> Result<QuadResult, QuadError> {
    let d = l.first().map_or(f.dim(), |r| r.len());
    let m = l.len();
    if gs.len() != d || f.dim() != d || g.dim() != m {
        return Err(QuadError::Shape("weights, F or G".into()));
    }
    if is_zero_window(f) || is_zero_window(g) {
        return Ok(QuadResult::exact(0.0));
    }
    let (flo, fhi) = f.support();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let id: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| (i == j) as u8 as f64 / n).collect()).collect();
    box_constraints(&id, &vec![0.0; d], &flo, &fhi, &mut a, &mut b);
    let (zlo, zhi) = g.support();
    let weight = |x: &[f64]| {
        let mut p = 1.0;
        for (gj, &xj) in gs.iter().zip(x) {
            p *= gj(xj);
            if p == 0.0 {
                return 0.0;
            }
        }
        let y: Vec<f64> = x.iter().map(|t| t / n).collect();
        p * f.eval(&y)
    };
    let gz = |z: &[f64]| g.eval(z);
    let prob = Affine { h: d, lp: l.to_vec(), vp: v.to_vec(), weight: &weight, gz: &gz, zlo, zhi, a, b };
    Ok(prob.integrate(opts)?.scaled(n.powi(-((d - m) as i32))))
}

/// Both sides of Poisson summation for F(x) = prod_i chi_i(x_i - c_i) over the lattice B Z^h.
#[derive(Clone, Debug, Serialize)]
pub struct PoissonCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
    pub lattice_points: usize,
    pub dual_points: usize,
    /// sup-norm radius of the dual truncation
    pub radius: f64,
    /// K-bound on |F_hat| at the truncation radius, from four integrations by parts
    pub decay_bound_at_radius: f64,
}

/// `basis` has the lattice generators as columns. The dual sum is grown in shells of
/// sup-norm width `step` until three consecutive shells contribute less than `tol`.
pub fn poisson_check(bumps: &[(SmoothBump, f64)], basis: &[Vec<f64>], tol: f64) -> Result<PoissonCheck, QuadError> {
    let h = bumps.len();
    if basis.len() != h || basis.iter().any(|r| r.len() != h) {
        return Err(QuadError::Shape("basis must be h x h".into()));
    }
    let det = det_f64(basis).abs();
    if det < 1e-12 {
        return Err(QuadError::NoInvertibleMinor);
    }
    let lo: Vec<f64> = bumps.iter().map(|(b, c)| c + b.support().0).collect();
    let hi: Vec<f64> = bumps.iter().map(|(b, c)| c + b.support().1).collect();
    let prim = geom::box_preimage(basis, &vec![0.0; h], &lo, &hi);
    let mut lhs_terms = Vec::new();
    prim.for_each(|k| {
        let x = matvec(basis, &k.iter().map(|&t| t as f64).collect::<Vec<_>>());
        lhs_terms.push(bumps.iter().zip(&x).map(|((b, c), xi)| b.eval(xi - c)).product::<f64>());
    });
    let lhs = geom::pairwise_sum(&lhs_terms);
    // dual basis B^{-T}
    let inv = inverse_f64(basis);
    let dual: Vec<Vec<f64>> = (0..h).map(|i| (0..h).map(|j| inv[j][i]).collect()).collect();
    let eta_min = bumps.iter().map(|(b, _)| b.eta).fold(f64::INFINITY, f64::min);
    let spacing = (0..h).map(|j| (0..h).map(|i| dual[i][j].abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
    let step = spacing.max(1.0 / eta_min);
    let fhat = |y: &[f64]| -> Complex64 {
        bumps.iter().zip(y).fold(Complex64::new(1.0, 0.0), |acc, ((b, c), &yi)| {
            acc * crate::arith::bump::e(-c * yi) * b.fourier(yi)
        })
    };
    let mut dual_points = 1;
    let mut rhs = fhat(&vec![0.0; h]);
    let mut quiet = 0;
    let mut t = 0.0;
    let max_radius = 1000.0 / eta_min;
    while quiet < 3 {
        let (a, b) = (t, t + step);
        if b > max_radius {
            return Err(QuadError::Truncation { tol, radius: t });
        }
        let poly = geom::box_preimage(&dual, &vec![0.0; h], &vec![-b; h], &vec![b; h]);
        let mut shell = Complex64::new(0.0, 0.0);
        let mut count = 0;
        poly.for_each(|k| {
            let y = matvec(&dual, &k.iter().map(|&t| t as f64).collect::<Vec<_>>());
            let s = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if s > a && s <= b {
                shell += fhat(&y);
                count += 1;
            }
        });
        dual_points += count;
        rhs += shell;
        quiet = if shell.norm() * det.recip() < tol { quiet + 1 } else { 0 };
        t = b;
    }
    let rhs = rhs.re / det;
    let decay_bound_at_radius = bumps.iter().map(|(b, _)| b.fourier_decay_constant()).product::<f64>() * (1.0 + t).powi(-4);
    Ok(PoissonCheck {
        lhs,
        rhs,
        diff: (lhs - rhs).abs(),
        lattice_points: lhs_terms.len(),
        dual_points,
        radius: t,
        decay_bound_at_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn surd() -> Vec<Vec<f64>> {
        vec![vec![1.0, 0.0, 2f64.sqrt(), -3f64.sqrt()], vec![0.0, 1.0, 5f64.sqrt(), -7f64.sqrt()]]
    }

    #[test]
    fn box_constant_values() {
        let opts = QuadOptions { samples: 1 << 20, seed: 7 };
        let c = box_constant_cl(&surd(), &[0.0, 0.0], 1.0, opts).unwrap();
        assert!((c.value - 1.394).abs() < 0.01, "{c:?}");
        // theta = 1/2: C_theta = eps * C_L with eps = 1/2
        let c = box_constant_cl(&[vec![1.0, 0.5, -1.0]], &[0.0], 1.0, opts).unwrap();
        assert!((0.5 * c.value - 0.75).abs() < 3e-3, "{c:?}");
        // a different minor gives the same constant
        let a = box_constant_cl_with(&surd(), &[0.0, 0.0], 1.0, &[2, 3], opts).unwrap();
        let b = box_constant_cl_with(&surd(), &[0.0, 0.0], 1.0, &[0, 1], opts).unwrap();
        assert!((a.value - b.value).abs() < 4.0 * (a.std_error + b.std_error) + 1e-3, "{a:?} {b:?}");
    }

    #[test]
    fn reproducible() {
        let opts = QuadOptions { samples: 10_000, seed: 3 };
        let a = box_constant_cl(&surd(), &[0.0, 0.0], 1.0, opts).unwrap();
        let b = box_constant_cl(&surd(), &[0.0, 0.0], 1.0, opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn direct_integral() {
        let opts = QuadOptions { samples: 1 << 18, seed: 1 };
        let l = vec![vec![1.0, -2f64.sqrt()]];
        let n = 1000.0;
        let big = box_integral_direct(&l, &[0.0], 1e6, n, opts).unwrap();
        assert_eq!((big.value, big.method), (n * n, QuadMethod::ClosedForm));
        assert_eq!(box_integral_direct(&l, &[1e7], 1.0, n, opts).unwrap().value, 0.0);
        let c = box_constant_cl(&l, &[0.0], n, opts).unwrap();
        let direct = box_integral_direct(&l, &[0.0], 1.0, n, opts).unwrap();
        let pred = c.value * n;
        assert!((direct.value - pred).abs() < 5.0 + 4.0 * direct.std_error, "{direct:?} {pred}");
    }

    #[test]
    fn trivial_integrals() {
        let f = Window::indicator_box(&[0.0, 0.0], &[1.0, 1.0]);
        let g = Window::indicator_box(&[-3.0, 0.0], &[5.0, 2.0]);
        assert_eq!(box_overlap_volume(&f, &g, &[0.0, 0.0], &[0.0, 0.0], 4.0), 4.0 * 2.0);
        let one: Weight1 = &|_| 1.0;
        let zero: Weight1 = &|_| 0.0;
        let l = surd();
        let gw = Window::cube(2, 1.0);
        let fw = Window::unit_box(4);
        let opts = QuadOptions { samples: 1 << 16, seed: 2 };
        let t0 = continuous_t(&[one, one, zero, one], &fw, &gw, &l, &[0.0, 0.0], 50.0, opts).unwrap();
        assert_eq!(t0.value, 0.0);
        let t1 = continuous_t(&[one; 4], &fw, &gw, &l, &[0.0, 0.0], 50.0, opts).unwrap();
        let c = box_constant_cl(&l, &[0.0, 0.0], 50.0, opts).unwrap();
        assert!((t1.value - c.value).abs() < 0.1, "{t1:?} {c:?}");
    }

    #[test]
    fn poisson() {
        let chi = crate::arith::bump_chi(10.0);
        let r = poisson_check(&[(chi, 0.0)], &[vec![1.0]], 1e-10).unwrap();
        assert!(r.diff < 1e-6, "{r:?}");
        assert!((r.lhs - chi.integral()).abs() < 1e-2);
        let r = poisson_check(&[(crate::arith::bump_chi(7.0), 0.3), (crate::arith::bump_chi(9.0), -1.0)], &[vec![2.0, 0.0], vec![0.0, 3.0]], 1e-10).unwrap();
        assert!(r.diff < 1e-6, "{r:?}");
        let r = poisson_check(&[(crate::arith::bump_chi(0.3), 0.5)], &[vec![1.0]], 1e-10).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.rhs.abs() < 1e-6, "{r:?}");
    }
}
