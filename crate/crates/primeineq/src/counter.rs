//! Exact evaluation of the counting forms T and of prime-solution counts.
//!
//! One engine sums prod_j f_j(n_j) F(x/N) G(A y + b) over integer points y, with n and x
//! integer affine images of y. Two enumeration orders are available: pivoting, which
//! loops over the supports of the free weights and solves a small box for the rest,
//! and a lattice walk over an LLL-reduced basis adapted to the support polytope.

use std::time::Instant;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebraic::field::{rat_from_f64, FieldElement};
use crate::algebraic::intmat::{self, IMat};
use crate::algebraic::linalg::{self, Mat};
use crate::algebraic::poly::Rat;
use crate::arith::{PrimeTable, Profile, SeqFn, Window};
use crate::forms::{AffineWindow, LinearSystem};
use crate::geom::{box_preimage, lll_reduce, Polytope};

/// Default refusal threshold on the estimated number of visited points.
pub const DEFAULT_BUDGET: f64 = 1e10;

#[derive(Debug, thiserror::Error)]
pub enum CountError {
    #[error("estimated {estimate:.3e} operations exceeds the budget {budget:.3e}")]
    Budget { estimate: f64, budget: f64 },
    #[error("prime table covers [1, {limit}] but N = {n}")]
    TableTooSmall { n: u64, limit: u64 },
    #[error("dimension mismatch: {0}")]
    Shape(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Pivot,
    Lattice,
}

#[derive(Clone, Copy, Debug)]
pub struct CountOptions {
    pub budget: f64,
    pub strategy: Option<Strategy>,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions { budget: DEFAULT_BUDGET, strategy: None }
    }
}

/// Raw sums from one enumeration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SumReport {
    /// one sum per weight set, unnormalised
    pub sums: Vec<f64>,
    /// integer points with F G != 0
    pub points: u64,
    /// boundary decisions escalated to exact arithmetic
    pub escalations: u64,
    pub strategy: Strategy,
    pub ops_estimate: f64,
}

/// Affine integer map y -> M y + c.
#[derive(Clone, Debug)]
pub struct IntAffine {
    pub m: Vec<Vec<i64>>,
    pub c: Vec<i64>,
}

impl IntAffine {
    pub fn identity(h: usize) -> Self {
        IntAffine { m: (0..h).map(|i| (0..h).map(|j| (i == j) as i64).collect()).collect(), c: vec![0; h] }
    }
    fn is_identity(&self) -> bool {
        self.c.iter().all(|&x| x == 0)
            && self.m.len() == self.m.first().map_or(0, |r| r.len())
            && self.m.iter().enumerate().all(|(i, r)| r.iter().enumerate().all(|(j, &x)| x == (i == j) as i64))
    }
    #[inline]
    fn apply_into(&self, y: &[i64], out: &mut [i64]) {
        for (o, (row, c)) in out.iter_mut().zip(self.m.iter().zip(&self.c)) {
            *o = c + row.iter().zip(y).map(|(a, b)| a * b).sum::<i64>();
        }
    }
    pub fn from_imat(m: &IMat, c: &[BigInt]) -> Self {
        IntAffine {
            m: m.iter().map(|r| r.iter().map(|x| x.to_i64().expect("entry fits i64")).collect()).collect(),
            c: c.iter().map(|x| x.to_i64().expect("entry fits i64")).collect(),
        }
    }
}

/// The sum prod_s f_s(wmap(y)) F(fmap(y) / N) G(ga y + gb) over y in Z^h.
pub struct Engine<'a> {
    pub h: usize,
    /// weight sets; each holds one function per coordinate of `wmap`
    pub sets: Vec<Vec<&'a SeqFn>>,
    pub wmap: IntAffine,
    pub fwin: &'a Window,
    pub fmap: IntAffine,
    pub scale: f64,
    pub gwin: &'a Window,
    pub ga: Vec<Vec<f64>>,
    pub gb: Vec<f64>,
    /// exact version of `ga` for deciding sharp boundaries
    pub ga_exact: Option<Mat<FieldElement>>,
}

#[derive(Clone)]
struct Acc {
    sums: Vec<(f64, f64)>,
    points: u64,
    esc: u64,
    n: Vec<i64>,
    x: Vec<i64>,
    xf: Vec<f64>,
}

impl Acc {
    fn new(sets: usize, dw: usize, df: usize) -> Self {
        Acc { sums: vec![(0.0, 0.0); sets.max(1)], points: 0, esc: 0, n: vec![0; dw], x: vec![0; df], xf: vec![0.0; df] }
    }
    fn merge(mut self, o: Acc) -> Acc {
        for (a, b) in self.sums.iter_mut().zip(&o.sums) {
            neumaier(a, b.0);
            neumaier(a, b.1);
        }
        self.points += o.points;
        self.esc += o.esc;
        self
    }
}

#[inline]
fn neumaier(acc: &mut (f64, f64), x: f64) {
    let t = acc.0 + x;
    if acc.0.abs() >= x.abs() {
        acc.1 += (acc.0 - t) + x;
    } else {
        acc.1 += (x - t) + acc.0;
    }
    acc.0 = t;
}

fn det_f64(m: &[Vec<f64>]) -> f64 {
    let n = m.len();
    let mut a = m.to_vec();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            d = -d;
        }
        d *= a[c][c];
        for i in c + 1..n {
            let f = a[i][c] / a[c][c];
            for j in c..n {
                a[i][j] -= f * a[c][j];
            }
        }
    }
    d
}

fn inverse_f64(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.iter().enumerate().map(|(i, r)| {
        let mut r = r.clone();
        r.extend((0..n).map(|j| (i == j) as i64 as f64));
        r
    }).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(p, c);
        let d = a[c][c];
        for x in a[c].iter_mut() {
            *x /= d;
        }
        for i in 0..n {
            if i != c {
                let f = a[i][c];
                if f != 0.0 {
                    for j in 0..2 * n {
                        a[i][j] -= f * a[c][j];
                    }
                }
            }
        }
    }
    a.into_iter().map(|r| r[n..].to_vec()).collect()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

impl<'a> Engine<'a> {
    fn check(&self) -> Result<(), CountError> {
        let bad = |what: &str| Err(CountError::Shape(what.to_string()));
        if self.fmap.m.len() != self.fwin.dim() {
            return bad("F window dimension");
        }
        if self.ga.len() != self.gwin.dim() || self.gb.len() != self.gwin.dim() {
            return bad("G window dimension");
        }
        if self.sets.iter().any(|s| s.len() != self.wmap.m.len()) {
            return bad("weight set length");
        }
        if self.ga.iter().any(|r| r.len() != self.h) || self.fmap.m.iter().any(|r| r.len() != self.h) {
            return bad("map width");
        }
        Ok(())
    }

    /// G at z with exact decisions on sharp faces.
    #[inline]
    fn g_value(&self, y: &[i64], esc: &mut u64) -> f64 {
        let mut val = 1.0;
        for (i, p) in self.gwin.profiles.iter().enumerate() {
            let row = &self.ga[i];
            let mut z = self.gb[i];
            let mut mag = self.gb[i].abs();
            for (a, &x) in row.iter().zip(y) {
                let t = a * x as f64;
                z += t;
                mag += t.abs();
            }
            let v = match *p {
                Profile::Indicator { lo, hi } => {
                    let margin = 1e-13 * (1.0 + mag);
                    let near = (z - lo).abs() <= margin || (z - hi).abs() <= margin;
                    let inside = if near {
                        if let Some(ex) = &self.ga_exact {
                            *esc += 1;
                            self.exact_inside(&ex[i], self.gb[i], y, lo, hi)
                        } else {
                            z >= lo && z <= hi
                        }
                    } else {
                        z >= lo && z <= hi
                    };
                    if inside {
                        1.0
                    } else {
                        0.0
                    }
                }
                _ => p.eval(z),
            };
            if v == 0.0 {
                return 0.0;
            }
            val *= v;
        }
        val
    }

    fn exact_inside(&self, row: &[FieldElement], b: f64, y: &[i64], lo: f64, hi: f64) -> bool {
        let field = row[0].field();
        let mut s = FieldElement::from_rat(field, rat_from_f64(b));
        for (a, &x) in row.iter().zip(y) {
            if x != 0 && !a.is_zero() {
                s = &s + &a.scale(&Rat::from_integer(BigInt::from(x)));
            }
        }
        let lo = FieldElement::from_rat(field, rat_from_f64(lo));
        let hi = FieldElement::from_rat(field, rat_from_f64(hi));
        (&s - &lo).sign() >= 0 && (&hi - &s).sign() >= 0
    }

    #[inline]
    fn visit(&self, y: &[i64], acc: &mut Acc) {
        // cheapest rejection first: a coordinate where every weight vanishes
        if !self.sets.is_empty() {
            self.wmap.apply_into(y, &mut acc.n);
            for (j, &n) in acc.n.iter().enumerate() {
                if self.sets.iter().all(|s| s[j].get(n) == 0.0) {
                    return;
                }
            }
        }
        self.fmap.apply_into(y, &mut acc.x);
        for (f, &x) in acc.xf.iter_mut().zip(&acc.x) {
            *f = x as f64 / self.scale;
        }
        let fv = self.fwin.eval(&acc.xf);
        if fv == 0.0 {
            return;
        }
        let gv = self.g_value(y, &mut acc.esc);
        if gv == 0.0 {
            return;
        }
        acc.points += 1;
        let base = fv * gv;
        if self.sets.is_empty() {
            neumaier(&mut acc.sums[0], base);
            return;
        }
        for (s, set) in self.sets.iter().enumerate() {
            let mut w = base;
            for (f, &n) in set.iter().zip(&acc.n) {
                w *= f.get(n);
                if w == 0.0 {
                    break;
                }
            }
            if w != 0.0 {
                neumaier(&mut acc.sums[s], w);
            }
        }
    }

    /// Constraint rows (a, lo, hi) on y describing the support.
    fn support_rows(&self) -> Vec<(Vec<f64>, f64, f64)> {
        let mut rows = Vec::new();
        for (i, p) in self.fwin.profiles.iter().enumerate() {
            let (lo, hi) = p.support();
            let a: Vec<f64> = self.fmap.m[i].iter().map(|&x| x as f64).collect();
            let c = self.fmap.c[i] as f64;
            rows.push((a, lo * self.scale - c, hi * self.scale - c));
        }
        if !self.sets.is_empty() {
            for j in 0..self.wmap.m.len() {
                let lo = self.sets.iter().map(|s| s[j].lo).min().unwrap() as f64;
                let hi = self.sets.iter().map(|s| s[j].hi()).max().unwrap() as f64;
                let a: Vec<f64> = self.wmap.m[j].iter().map(|&x| x as f64).collect();
                let c = self.wmap.c[j] as f64;
                rows.push((a, lo - c, hi - c));
            }
        }
        for (i, p) in self.gwin.profiles.iter().enumerate() {
            let (lo, hi) = p.support();
            rows.push((self.ga[i].clone(), lo - self.gb[i], hi - self.gb[i]));
        }
        rows
    }

    /// Upper bound for the support volume: the best h rows bound a parallelepiped.
    fn volume_bound(&self, rows: &[(Vec<f64>, f64, f64)]) -> f64 {
        let h = self.h;
        if h == 0 {
            return 1.0;
        }
        let mut best = f64::INFINITY;
        let combos = combinations(rows.len(), h);
        for c in combos.iter().take(20_000) {
            let m: Vec<Vec<f64>> = c.iter().map(|&i| rows[i].0.clone()).collect();
            let d = det_f64(&m).abs();
            if d > 1e-12 {
                let v: f64 = c.iter().map(|&i| (rows[i].2 - rows[i].1).max(0.0) + 1.0 / h as f64).product::<f64>() / d;
                best = best.min(v);
            }
        }
        best
    }

    /// Pivot plan, when the weights sit on the coordinates themselves.
    fn pivot_plan(&self) -> Option<(Vec<usize>, Vec<usize>, Vec<Vec<i64>>, f64)> {
        if !(self.wmap.is_identity() && self.fmap.is_identity()) && !(self.sets.is_empty() && self.fmap.is_identity()) {
            return None;
        }
        let h = self.h;
        let m = self.ga.len();
        if m > h {
            return None;
        }
        let mut best: Option<(Vec<usize>, f64)> = None;
        for c in combinations(h, m) {
            let sub: Vec<Vec<f64>> = self.ga.iter().map(|r| c.iter().map(|&j| r[j]).collect()).collect();
            let d = if m == 0 { 1.0 } else { det_f64(&sub).abs() };
            let exact_ok = match &self.ga_exact {
                Some(ex) if m > 0 => !linalg::det(&ex.iter().map(|r| c.iter().map(|&j| r[j].clone()).collect()).collect::<Vec<_>>()).is_zero(),
                _ => d > 1e-12,
            };
            if exact_ok && best.as_ref().is_none_or(|b| d > b.1) {
                best = Some((c, d));
            }
        }
        let (piv, det) = best?;
        let free: Vec<usize> = (0..h).filter(|j| !piv.contains(j)).collect();
        let lists: Vec<Vec<i64>> = free
            .iter()
            .map(|&j| {
                let (lo, hi) = self.fwin.profiles[j].support();
                let (lo, hi) = ((lo * self.scale).ceil() as i64, (hi * self.scale).floor() as i64);
                if self.sets.is_empty() {
                    (lo..=hi).collect()
                } else {
                    let mut pts: Vec<i64> = self.sets.iter().flat_map(|s| s[j].support_points()).filter(|&x| x >= lo && x <= hi).collect();
                    pts.sort_unstable();
                    pts.dedup();
                    pts
                }
            })
            .collect();
        let gvol: f64 = self.gwin.profiles.iter().map(|p| {
            let (a, b) = p.support();
            b - a
        }).product();
        let per = 1.0 + gvol / det;
        let cost = lists.iter().map(|l| l.len() as f64).product::<f64>() * per;
        Some((piv, free, lists, cost))
    }

    pub fn run(&self, opts: CountOptions) -> Result<SumReport, CountError> {
        self.check()?;
        let rows = self.support_rows();
        let lattice_cost = self.volume_bound(&rows);
        let plan = self.pivot_plan();
        let pivot_cost = plan.as_ref().map_or(f64::INFINITY, |p| p.3);
        let strategy = match opts.strategy {
            Some(Strategy::Pivot) if plan.is_some() => Strategy::Pivot,
            Some(_) => Strategy::Lattice,
            None if pivot_cost < lattice_cost => Strategy::Pivot,
            None => Strategy::Lattice,
        };
        let estimate = if strategy == Strategy::Pivot { pivot_cost } else { lattice_cost };
        if estimate > opts.budget {
            return Err(CountError::Budget { estimate, budget: opts.budget });
        }
        let acc = match strategy {
            Strategy::Pivot => {
                let (piv, free, lists, _) = plan.unwrap();
                self.run_pivot(&piv, &free, &lists)
            }
            Strategy::Lattice => self.run_lattice(&rows),
        };
        Ok(SumReport {
            sums: acc.sums.iter().map(|s| s.0 + s.1).collect(),
            points: acc.points,
            escalations: acc.esc,
            strategy,
            ops_estimate: estimate,
        })
    }

    fn fresh(&self) -> Acc {
        Acc::new(self.sets.len(), self.wmap.m.len(), self.fmap.m.len())
    }

    fn run_lattice(&self, rows: &[(Vec<f64>, f64, f64)]) -> Acc {
        let h = self.h;
        if h == 0 {
            let mut acc = self.fresh();
            self.visit(&[], &mut acc);
            return acc;
        }
        // shape form: each constraint counts in units of its own width
        let mut q = vec![vec![0.0; h]; h];
        for (a, lo, hi) in rows {
            let w = (hi - lo).max(1e-6);
            for i in 0..h {
                for j in 0..h {
                    q[i][j] += a[i] * a[j] / (w * w);
                }
            }
        }
        let u = lll_reduce(&q);
        // longest extent (shortest reduced vector) innermost
        let u: Vec<Vec<i64>> = u.iter().map(|r| r.iter().rev().copied().collect()).collect();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (row, lo, hi) in rows {
            let ar: Vec<f64> = (0..h).map(|k| (0..h).map(|i| row[i] * u[i][k] as f64).sum()).collect();
            a.push(ar.clone());
            b.push(*hi);
            a.push(ar.iter().map(|x| -x).collect());
            b.push(-lo);
        }
        let poly = Polytope::new(&a, &b);
        let init = self.fresh();
        poly.par_fold(
            init,
            |acc, z| {
                let y: Vec<i64> = (0..h).map(|i| (0..h).map(|k| u[i][k] * z[k]).sum()).collect();
                self.visit(&y, acc);
            },
            Acc::merge,
        )
    }

    fn run_pivot(&self, piv: &[usize], free: &[usize], lists: &[Vec<i64>]) -> Acc {
        let m = piv.len();
        let h = self.h;
        let mmat: Vec<Vec<f64>> = self.ga.iter().map(|r| piv.iter().map(|&j| r[j]).collect()).collect();
        let (lo, hi): (Vec<f64>, Vec<f64>) = self.gwin.profiles.iter().map(|p| p.support()).unzip();
        let p0 = box_preimage(&mmat, &vec![0.0; m], &lo, &hi);
        let minv = if m > 0 { inverse_f64(&mmat) } else { Vec::new() };
        let cols: Vec<Vec<f64>> = free.iter().map(|&j| self.ga.iter().map(|r| r[j]).collect()).collect();

        let run_from = |first: Option<i64>| -> Acc {
            let mut acc = self.fresh();
            let mut y = vec![0i64; h];
            let mut w = self.gb.clone();
            let mut t = vec![0.0; m];
            let mut buf = Vec::with_capacity(m);
            // iterative nested loops over the free coordinates
            let nf = free.len();
            let mut idx = vec![0usize; nf];
            let start = usize::from(first.is_some());
            if let Some(x0) = first {
                y[free[0]] = x0;
            }
            let lens: Vec<usize> = lists.iter().map(|l| l.len()).collect();
            if (start..nf).any(|k| lens[k] == 0) {
                return acc;
            }
            loop {
                for k in start..nf {
                    y[free[k]] = lists[k][idx[k]];
                }
                for i in 0..m {
                    w[i] = self.gb[i] + (0..nf).map(|k| cols[k][i] * y[free[k]] as f64).sum::<f64>();
                }
                for i in 0..m {
                    t[i] = (0..m).map(|k| minv[i][k] * w[k]).sum();
                }
                p0.for_each_shifted_buf(&t, &mut buf, |yp| {
                    for (k, &j) in piv.iter().enumerate() {
                        y[j] = yp[k];
                    }
                    self.visit(&y, &mut acc);
                });
                // odometer
                let mut k = nf;
                loop {
                    if k == start {
                        return acc;
                    }
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < lens[k] {
                        break;
                    }
                    idx[k] = 0;
                }
            }
        };

        if free.is_empty() {
            return run_from(None);
        }
        if lists[0].is_empty() {
            return self.fresh();
        }
        let parts: Vec<Acc> = lists[0].par_iter().map(|&x0| run_from(Some(x0))).collect();
        parts.into_iter().fold(self.fresh(), Acc::merge)
    }
}

/// Exact count of prime solutions to ||L p + v||_inf <= eps with p in [N]^d.
#[derive(Clone, Debug, Serialize)]
pub struct CountResult {
    pub count: u64,
    /// sum over solutions of prod_j log p_j
    pub weighted: f64,
    pub n: u64,
    pub epsilon: f64,
    pub v: Vec<f64>,
    pub strategy: Strategy,
    pub ops_estimate: f64,
    pub escalations: u64,
    pub wall_seconds: f64,
}

pub fn count_prime_solutions(sys: &LinearSystem, table: &PrimeTable, opts: CountOptions) -> Result<CountResult, CountError> {
    let n = sys.n;
    if table.limit() < n {
        return Err(CountError::TableTooSmall { n, limit: table.limit() });
    }
    let t0 = Instant::now();
    let ind = SeqFn::from_fn(1, n as i64, |k| if table.is_prime(k as u64) { 1.0 } else { 0.0 });
    let lam = SeqFn::lambda_prime(table, n as i64);
    let fwin = Window::unit_box(sys.d);
    let gwin = Window::cube(sys.m, sys.epsilon);
    let eng = Engine {
        h: sys.d,
        sets: vec![vec![&ind; sys.d], vec![&lam; sys.d]],
        wmap: IntAffine::identity(sys.d),
        fwin: &fwin,
        fmap: IntAffine::identity(sys.d),
        scale: n as f64,
        gwin: &gwin,
        ga: sys.l_f64(),
        gb: sys.v.clone(),
        ga_exact: Some(sys.l.clone()),
    };
    let rep = eng.run(opts)?;
    Ok(CountResult {
        count: rep.sums[0].round() as u64,
        weighted: rep.sums[1],
        n,
        epsilon: sys.epsilon,
        v: sys.v.clone(),
        strategy: rep.strategy,
        ops_estimate: rep.ops_estimate,
        escalations: rep.escalations,
        wall_seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Value of a normalised T form with its enumeration report.
#[derive(Clone, Debug, Serialize)]
pub struct TValue {
    pub values: Vec<f64>,
    pub report: SumReport,
}

fn norm(n: u64, e: i64) -> f64 {
    (n as f64).powi(-(e as i32))
}

/// N^{-(d-m)} sum_n prod f_j(n_j) F(n/N) G(L n + v), for several weight sets at once.
pub fn t_discrete_multi(
    sets: &[Vec<&SeqFn>],
    f: &Window,
    g: &Window,
    l: &Mat<FieldElement>,
    v: &[f64],
    n: u64,
    opts: CountOptions,
) -> Result<TValue, CountError> {
    let m = l.len();
    let d = l.first().map_or(f.dim(), |r| r.len());
    let eng = Engine {
        h: d,
        sets: sets.to_vec(),
        wmap: IntAffine::identity(d),
        fwin: f,
        fmap: IntAffine::identity(d),
        scale: n as f64,
        gwin: g,
        ga: linalg::approx_matrix(l),
        gb: v.to_vec(),
        ga_exact: if l.is_empty() { None } else { Some(l.clone()) },
    };
    let report = eng.run(opts)?;
    let s = norm(n, d as i64 - m as i64);
    Ok(TValue { values: report.sums.iter().map(|x| x * s).collect(), report })
}

pub fn t_discrete(
    fs: &[&SeqFn],
    f: &Window,
    g: &Window,
    l: &Mat<FieldElement>,
    v: &[f64],
    n: u64,
    opts: CountOptions,
) -> Result<f64, CountError> {
    let sets = if fs.is_empty() { Vec::new() } else { vec![fs.to_vec()] };
    Ok(t_discrete_multi(&sets, f, g, l, v, n, opts)?.values[0])
}

/// N^{-(h-m)} sum_{n in Z^h} prod f_j(xi_j(n) + r_j) F((Xi n + r)/N) G(L n + v).
#[allow(clippy::too_many_arguments)]
pub fn t_general(
    fs: &[&SeqFn],
    f: &Window,
    g: &AffineWindow,
    l_prime: &Mat<FieldElement>,
    v_prime: &[f64],
    xi: &IMat,
    r_tilde: &[i64],
    n: u64,
    opts: CountOptions,
) -> Result<f64, CountError> {
    let h = xi.first().map_or(0, |r| r.len());
    let mp = l_prime.len();
    let lpf = linalg::approx_matrix(l_prime);
    // G(c + P (L' k + v'))
    let ga: Vec<Vec<f64>> = g
        .matrix
        .iter()
        .map(|prow| (0..h).map(|k| (0..mp).map(|i| prow[i] * lpf[i][k]).sum()).collect())
        .collect();
    let gb: Vec<f64> = g
        .offset
        .iter()
        .zip(&g.matrix)
        .map(|(c, prow)| c + prow.iter().zip(v_prime).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let ga_exact = match (&g.matrix_exact, mp) {
        (Some(p), mp) if mp > 0 => Some(linalg::matmul(p, l_prime)),
        _ => None,
    };
    let map = IntAffine { m: IntAffine::from_imat(xi, &[]).m, c: r_tilde.to_vec() };
    let eng = Engine {
        h,
        sets: if fs.is_empty() { Vec::new() } else { vec![fs.to_vec()] },
        wmap: map.clone(),
        fwin: f,
        fmap: map,
        scale: n as f64,
        gwin: &g.base,
        ga,
        gb,
        ga_exact,
    };
    let report = eng.run(opts)?;
    Ok(report.sums[0] * norm(n, h as i64 - mp as i64))
}

/// Solutions of e_j | xi_j(n) + r_j for all j: a coset n0 + B Z^h, or None.
pub fn congruence_lattice(xi: &IMat, e: &[u64], r: &[i64]) -> Option<(Vec<BigInt>, IMat)> {
    let d = xi.len();
    let h = xi.first().map_or(0, |row| row.len());
    // [Xi | -diag(e)] (n; k) = -r
    let c: IMat = (0..d)
        .map(|j| {
            let mut row = xi[j].clone();
            row.extend((0..d).map(|i| if i == j { -BigInt::from(e[j]) } else { BigInt::zero() }));
            row
        })
        .collect();
    let (hm, u) = intmat::hnf(&c);
    // H is lower triangular on its first d columns since diag(e) has full rank
    let mut sol = vec![BigInt::zero(); d];
    for j in 0..d {
        let mut rhs = BigInt::from(-r[j]);
        for (k, s) in sol.iter().enumerate().take(j) {
            rhs -= &hm[j][k] * s;
        }
        let p = &hm[j][j];
        if p.is_zero() || !(&rhs % p).is_zero() {
            return None;
        }
        sol[j] = rhs / p;
    }
    let n0: Vec<BigInt> = (0..h).map(|i| (0..d).fold(BigInt::zero(), |s, k| s + &u[i][k] * &sol[k])).collect();
    let b: IMat = (0..h).map(|i| u[i][d..].to_vec()).collect();
    debug_assert!(intmat::det(&b).abs() >= BigInt::one());
    Some((n0, b))
}

/// N^{-(h-m)} sum over n in Z^h with e_j | xi_j(n) + r_j of F(n/N) G(L n + v).
#[allow(clippy::too_many_arguments)]
pub fn lattice_restricted_sum(
    f: &Window,
    g: &Window,
    l: &Mat<FieldElement>,
    v: &[f64],
    e: &[u64],
    xi: &IMat,
    r_tilde: &[i64],
    n: u64,
    opts: CountOptions,
) -> Result<f64, CountError> {
    let h = xi.first().map_or(0, |r| r.len());
    let m = l.len();
    let Some((n0, b)) = congruence_lattice(xi, e, r_tilde) else { return Ok(0.0) };
    let fmap = IntAffine::from_imat(&b, &n0);
    let lf = linalg::approx_matrix(l);
    let bf: Vec<Vec<f64>> = b.iter().map(|r| r.iter().map(|x| x.to_f64().unwrap()).collect()).collect();
    let n0f: Vec<f64> = n0.iter().map(|x| x.to_f64().unwrap()).collect();
    let ga: Vec<Vec<f64>> = lf.iter().map(|row| (0..h).map(|k| (0..h).map(|i| row[i] * bf[i][k]).sum()).collect()).collect();
    let gb: Vec<f64> = lf.iter().zip(v).map(|(row, vi)| vi + row.iter().zip(&n0f).map(|(a, x)| a * x).sum::<f64>()).collect();
    let field = l.first().and_then(|r| r.first()).map(|x| x.field().clone());
    let ga_exact = field.map(|fld| {
        let bfe: Mat<FieldElement> = b.iter().map(|r| r.iter().map(|x| FieldElement::from_rat(&fld, Rat::from_integer(x.clone()))).collect()).collect();
        linalg::matmul(l, &bfe)
    });
    let eng = Engine {
        h,
        sets: Vec::new(),
        wmap: IntAffine { m: Vec::new(), c: Vec::new() },
        fwin: f,
        fmap,
        scale: n as f64,
        gwin: g,
        ga,
        gb,
        ga_exact,
    };
    let rep = eng.run(opts)?;
    Ok(rep.sums[0] * norm(n, h as i64 - m as i64))
}

/// Sandwich for an unweighted count from a log-weighted one over [delta N, N]^d.
pub fn unweighted_from_weighted(weighted: f64, n: u64, d: usize, delta: f64) -> (f64, f64) {
    let ln = (n as f64).ln();
    let lo_log = (delta * n as f64).ln();
    (weighted / ln.powi(d as i32), weighted / lo_log.powi(d as i32))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(rows: &[Vec<&str>], v: Vec<f64>, eps: f64, n: u64) -> LinearSystem {
        let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect();
        LinearSystem::parse(&rows, v, eps, n).unwrap()
    }

    fn naive(s: &LinearSystem, table: &PrimeTable) -> (u64, f64) {
        let lf = s.l_f64();
        let ps: Vec<i64> = table.primes_upto(s.n).iter().map(|&p| p as i64).collect();
        let mut count = 0;
        let mut w = 0.0;
        let mut idx = vec![0usize; s.d];
        loop {
            let p: Vec<i64> = idx.iter().map(|&i| ps[i]).collect();
            let ok = (0..s.m).all(|i| (lf[i].iter().zip(&p).map(|(a, &x)| a * x as f64).sum::<f64>() + s.v[i]).abs() <= s.epsilon);
            if ok {
                count += 1;
                w += p.iter().map(|&x| (x as f64).ln()).product::<f64>();
            }
            let mut k = s.d;
            loop {
                if k == 0 {
                    return (count, w);
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < ps.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }

    #[test]
    fn count_examples() {
        let t = PrimeTable::new(2000);
        let s = sys(&[vec!["1", "-1"]], vec![0.0], 0.5, 100);
        assert_eq!(count_prime_solutions(&s, &t, CountOptions::default()).unwrap().count, 25);
        let s = sys(&[vec!["1", "sqrt2", "-sqrt3"]], vec![0.0], 0.5, 100);
        let c = count_prime_solutions(&s, &t, CountOptions::default()).unwrap();
        assert_eq!(c.count, naive(&s, &t).0);
        assert!(c.count > 0);
        let s = sys(&[vec!["1", "sqrt2", "-sqrt3"]], vec![0.0], 0.0, 100);
        assert_eq!(count_prime_solutions(&s, &t, CountOptions::default()).unwrap().count, 0);
    }

    #[test]
    fn strategies_agree() {
        let t = PrimeTable::new(2000);
        let s = sys(&[vec!["1", "0", "sqrt2", "-sqrt3"], vec!["0", "1", "sqrt5", "-sqrt7"]], vec![0.3, -1.1], 2.0, 150);
        let a = count_prime_solutions(&s, &t, CountOptions { strategy: Some(Strategy::Pivot), ..Default::default() }).unwrap();
        let b = count_prime_solutions(&s, &t, CountOptions { strategy: Some(Strategy::Lattice), ..Default::default() }).unwrap();
        assert_eq!(a.count, b.count);
        assert!((a.weighted - b.weighted).abs() < 1e-9 * a.weighted.max(1.0));
        let (c, w) = naive(&s, &t);
        assert_eq!(a.count, c);
        assert!((a.weighted - w).abs() < 1e-9 * w.max(1.0));
    }

    #[test]
    fn rational_boundaries_are_exact() {
        // x - 2y + z lands exactly on +-1 often; floats alone would be fragile
        let t = PrimeTable::new(2000);
        let s = sys(&[vec!["1/2", "-1", "1/2"]], vec![0.0], 0.5, 60);
        let c = count_prime_solutions(&s, &t, CountOptions::default()).unwrap();
        let ps = t.primes_upto(60);
        let mut brute = 0;
        for &a in ps {
            for &b in ps {
                for &cc in ps {
                    if (a as i64 - 2 * b as i64 + cc as i64).abs() <= 1 {
                        brute += 1;
                    }
                }
            }
        }
        assert_eq!(c.count, brute);
        assert!(c.escalations > 0);
    }

    #[test]
    fn budget_refusal() {
        let t = PrimeTable::new(2000);
        let s = sys(&[vec!["1", "sqrt2", "-sqrt3"]], vec![0.0], 0.5, 2000);
        let e = count_prime_solutions(&s, &t, CountOptions { budget: 10.0, strategy: None });
        assert!(matches!(e, Err(CountError::Budget { .. })));
        let s = sys(&[vec!["1", "-1"]], vec![0.0], 0.5, 5000);
        assert!(matches!(count_prime_solutions(&s, &t, CountOptions::default()), Err(CountError::TableTooSmall { .. })));
    }

    #[test]
    fn t_discrete_separable() {
        // G = 1 on the whole image: the sum factorises into one-dimensional means
        let s = sys(&[vec!["1", "sqrt2"]], vec![0.0], 1.0, 60);
        let f = SeqFn::local_von_mangoldt(6, -10, 100);
        let fw = Window::unit_box(2);
        let gw = Window::cube(1, 1e3);
        let v = t_discrete(&[&f, &f], &fw, &gw, &s.l, &s.v, 60, CountOptions::default()).unwrap();
        let one: f64 = (0..=60).map(|n| f.get(n)).sum();
        assert!((v - one * one / 60.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn t_general_identity_matches() {
        let s = sys(&[vec!["1", "sqrt2", "-sqrt3"]], vec![0.25], 1.5, 80);
        let t = PrimeTable::new(100);
        let f = SeqFn::lambda_prime(&t, 80);
        let fw = Window::smooth_unit_box(3, 0.2);
        let gw = Window::smooth_cube(1, 1.5, 0.2);
        let a = t_discrete(&[&f, &f, &f], &fw, &gw, &s.l, &s.v, 80, CountOptions::default()).unwrap();
        let aw = AffineWindow { base: gw.clone(), offset: vec![0.0], matrix: vec![vec![1.0]], matrix_exact: None };
        let b = t_general(&[&f, &f, &f], &fw, &aw, &s.l, &s.v, &intmat::identity(3), &[0, 0, 0], 80, CountOptions::default()).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        assert!(a > 0.0);
    }

    #[test]
    fn lattice_sums() {
        let s = sys(&[vec!["1", "sqrt2"]], vec![0.0], 1.0, 200);
        let fw = Window::unit_box(2);
        let gw = Window::smooth_cube(1, 2.0, 0.25);
        let id = intmat::identity(2);
        let plain = t_discrete(&[], &fw, &gw, &s.l, &s.v, 200, CountOptions::default()).unwrap();
        let r = lattice_restricted_sum(&fw, &gw, &s.l, &s.v, &[1, 1], &id, &[0, 0], 200, CountOptions::default()).unwrap();
        assert!((plain - r).abs() < 1e-12 * plain, "{plain} {r}");
        let xi = intmat::from_i64(&[vec![1], vec![1]]);
        assert!(congruence_lattice(&xi, &[2, 2], &[0, 1]).is_none());
        let one = crate::forms::LinearSystem::from_matrix(&[vec!["sqrt2"]]).unwrap();
        let z = lattice_restricted_sum(&Window::unit_box(1), &Window::cube(1, 5.0), &one.l, &[0.0], &[2, 2], &xi, &[0, 1], 50, CountOptions::default()).unwrap();
        assert_eq!(z, 0.0);
        // e = (2, 3) on the identity: density 1/6
        let (n0, b) = congruence_lattice(&id, &[2, 3], &[1, 1]).unwrap();
        assert_eq!(intmat::det(&b).abs(), BigInt::from(6));
        assert!((&n0[0] + 1i32) % 2 == BigInt::zero() && (&n0[1] + 1i32) % 3 == BigInt::zero());
    }

    #[test]
    fn log_removal() {
        assert_eq!(unweighted_from_weighted(0.0, 1000, 4, 0.1), (0.0, 0.0));
        let (a, b) = unweighted_from_weighted(5.0, 1000, 2, 1.0);
        assert!((a - b).abs() < 1e-15 && (a - 5.0 / 1000f64.ln().powi(2)).abs() < 1e-15);
        let (a, b) = unweighted_from_weighted(1.0, 100_000, 4, 0.1);
        assert!((a / b - 0.8f64.powi(4)).abs() < 1e-12);
    }
}
