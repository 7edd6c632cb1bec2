//! Integer points of small polytopes {x : A x <= b} by Fourier-Motzkin projection.
//!
//! Bounds are computed in floating point and widened by a slack, so the enumeration
//! is a superset of the exact answer; callers filter candidates exactly.

use rayon::prelude::*;

const SLACK: f64 = 1e-7;

/// One inequality a . x <= b.
#[derive(Clone, Debug)]
struct Half {
    a: Vec<f64>,
    b: f64,
}

fn normalise(h: &mut Half) {
    let s = h.a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if s > 0.0 {
        h.a.iter_mut().for_each(|x| *x /= s);
        h.b /= s;
    }
}

fn dedup(hs: Vec<Half>) -> Vec<Half> {
    let mut out: Vec<Half> = Vec::with_capacity(hs.len());
    'outer: for h in hs {
        for o in out.iter_mut() {
            if o.a.iter().zip(&h.a).all(|(x, y)| (x - y).abs() < 1e-12) {
                o.b = o.b.min(h.b);
                continue 'outer;
            }
        }
        out.push(h);
    }
    out
}

/// Eliminate the last variable.
fn eliminate_last(hs: &[Half]) -> Vec<Half> {
    let Some(first) = hs.first() else { return Vec::new() };
    let k = first.a.len() - 1;
    let (mut pos, mut neg, mut zero) = (vec![], vec![], vec![]);
    for h in hs {
        let c = h.a[k];
        if c > 1e-14 {
            pos.push(h);
        } else if c < -1e-14 {
            neg.push(h);
        } else {
            zero.push(Half { a: h.a[..k].to_vec(), b: h.b });
        }
    }
    let mut out = zero;
    for p in &pos {
        for n in &neg {
            let (cp, cn) = (p.a[k], -n.a[k]);
            let a: Vec<f64> = (0..k).map(|i| p.a[i] * cn + n.a[i] * cp).collect();
            let mut h = Half { a, b: p.b * cn + n.b * cp };
            normalise(&mut h);
            out.push(h);
        }
    }
    dedup(out)
}

/// Drop inequalities implied by the others, tested by one LP each. Only ever removes
/// constraints, so the enumeration stays a superset.
fn prune(mut hs: Vec<Half>) -> Vec<Half> {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    let mut i = 0;
    while i < hs.len() {
        let k = hs[i].a.len();
        let mut p = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = (0..k).map(|j| p.add_var(hs[i].a[j], (f64::NEG_INFINITY, f64::INFINITY))).collect();
        for (j, h) in hs.iter().enumerate() {
            if j != i {
                let terms: Vec<_> = vars.iter().zip(&h.a).filter(|(_, c)| **c != 0.0).map(|(v, c)| (*v, *c)).collect();
                p.add_constraint(terms.as_slice(), ComparisonOp::Le, h.b);
            }
        }
        let redundant = matches!(p.solve(), Ok(sol) if sol.objective() <= hs[i].b + 1e-9 * (1.0 + hs[i].b.abs()));
        if redundant {
            hs.remove(i);
        } else {
            i += 1;
        }
    }
    hs
}

/// A polytope prepared for enumeration: `levels[i]` constrains x_0..x_i.
pub struct Polytope {
    dim: usize,
    levels: Vec<Vec<Half>>,
    empty: bool,
}

impl Polytope {
    /// Rows of `a` with right sides `b`; must be bounded in every coordinate.
    pub fn new(a: &[Vec<f64>], b: &[f64]) -> Self {
        let dim = a.first().map_or(0, |r| r.len());
        let mut cur: Vec<Half> = a
            .iter()
            .zip(b)
            .map(|(r, &b)| {
                let mut h = Half { a: r.clone(), b };
                normalise(&mut h);
                h
            })
            .collect();
        cur = dedup(cur);
        let mut levels = vec![Vec::new(); dim];
        for i in (0..dim).rev() {
            if cur.len() > 2 * (i + 2) {
                cur = prune(cur);
            }
            levels[i] = cur.clone();
            cur = eliminate_last(&cur);
        }
        // constant rows left after full elimination decide real feasibility
        let empty = cur.iter().any(|h| h.b < -SLACK * (1.0 + h.b.abs()));
        Polytope { dim, levels, empty }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether the real polytope is nonempty (up to the slack); boundedness not required.
    pub fn is_feasible(&self) -> bool {
        !self.empty
    }

    /// Allow a shift: the constraint set becomes A (x + t) <= b.
    fn range_shifted(&self, prefix: &[i64], t: &[f64]) -> Option<(i64, i64)> {
        let i = prefix.len();
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for h in &self.levels[i] {
            let c = h.a[i];
            let mut rest = h.b;
            for (j, a) in h.a.iter().enumerate().take(i + 1) {
                rest -= a * t[j];
            }
            for (j, &x) in prefix.iter().enumerate() {
                rest -= h.a[j] * x as f64;
            }
            if c.abs() < 1e-14 {
                if rest < -SLACK * (1.0 + rest.abs()) {
                    return None;
                }
                continue;
            }
            let s = rest / c;
            let pad = SLACK * (1.0 + s.abs());
            if c > 0.0 {
                hi = hi.min(s + pad);
            } else {
                lo = lo.max(s - pad);
            }
        }
        assert!(lo.is_finite() && hi.is_finite(), "polytope unbounded in coordinate {i}");
        let (l, h) = (lo.ceil() as i64, hi.floor() as i64);
        (l <= h).then_some((l, h))
    }

    fn walk_shifted(&self, prefix: &mut Vec<i64>, t: &[f64], visit: &mut dyn FnMut(&[i64])) {
        if prefix.len() == self.dim {
            visit(prefix);
            return;
        }
        if let Some((l, h)) = self.range_shifted(prefix, t) {
            for x in l..=h {
                prefix.push(x);
                self.walk_shifted(prefix, t, visit);
                prefix.pop();
            }
        }
    }

    /// Integer points x with x + t in the polytope, t fixed. Reuses the projection,
    /// so translating a fixed shape costs no new elimination.
    pub fn for_each_shifted(&self, t: &[f64], mut visit: impl FnMut(&[i64])) {
        if self.empty {
            return;
        }
        if self.dim == 0 {
            visit(&[]);
            return;
        }
        let mut prefix = Vec::with_capacity(self.dim);
        self.walk_shifted(&mut prefix, t, &mut visit);
    }

    /// As `for_each_shifted`, reusing a caller-owned prefix buffer.
    pub fn for_each_shifted_buf(&self, t: &[f64], buf: &mut Vec<i64>, mut visit: impl FnMut(&[i64])) {
        if self.empty {
            return;
        }
        if self.dim == 0 {
            visit(&[]);
            return;
        }
        buf.clear();
        self.walk_shifted(buf, t, &mut visit);
    }

    /// First candidate satisfying `pred`, visiting at most `cap` candidates.
    /// Returns `Err(())` when the cap was hit before a decision.
    pub fn find(&self, cap: usize, mut pred: impl FnMut(&[i64]) -> bool) -> Result<Option<Vec<i64>>, ()> {
        let mut seen = 0usize;
        let mut found = None;
        let mut capped = false;
        // a small explicit stack gives early exit without unwinding closures
        fn go(
            p: &Polytope,
            prefix: &mut Vec<i64>,
            seen: &mut usize,
            cap: usize,
            pred: &mut dyn FnMut(&[i64]) -> bool,
            found: &mut Option<Vec<i64>>,
            capped: &mut bool,
        ) {
            if found.is_some() || *capped {
                return;
            }
            if prefix.len() == p.dim {
                *seen += 1;
                if *seen > cap {
                    *capped = true;
                } else if pred(prefix) {
                    *found = Some(prefix.clone());
                }
                return;
            }
            if let Some((l, h)) = p.range(prefix) {
                for x in l..=h {
                    prefix.push(x);
                    go(p, prefix, seen, cap, pred, found, capped);
                    prefix.pop();
                    if found.is_some() || *capped {
                        return;
                    }
                }
            }
        }
        if self.empty {
            return Ok(None);
        }
        go(self, &mut Vec::new(), &mut seen, cap, &mut pred, &mut found, &mut capped);
        if found.is_some() {
            Ok(found)
        } else if capped {
            Err(())
        } else {
            Ok(None)
        }
    }

    /// Integer range of coordinate `i` given the fixed prefix x_0..x_{i-1}.
    fn range(&self, prefix: &[i64]) -> Option<(i64, i64)> {
        let i = prefix.len();
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for h in &self.levels[i] {
            let c = h.a[i];
            let rest: f64 = h.b - prefix.iter().zip(&h.a).map(|(&x, a)| a * x as f64).sum::<f64>();
            if c.abs() < 1e-14 {
                if rest < -SLACK * (1.0 + rest.abs()) {
                    return None;
                }
                continue;
            }
            let t = rest / c;
            let pad = SLACK * (1.0 + t.abs());
            if c > 0.0 {
                hi = hi.min(t + pad);
            } else {
                lo = lo.max(t - pad);
            }
        }
        assert!(lo.is_finite() && hi.is_finite(), "polytope unbounded in coordinate {i}");
        let (l, h) = (lo.ceil() as i64, hi.floor() as i64);
        (l <= h).then_some((l, h))
    }

    fn walk(&self, prefix: &mut Vec<i64>, visit: &mut dyn FnMut(&[i64])) {
        if prefix.len() == self.dim {
            visit(prefix);
            return;
        }
        if let Some((l, h)) = self.range(prefix) {
            for x in l..=h {
                prefix.push(x);
                self.walk(prefix, visit);
                prefix.pop();
            }
        }
    }

    /// Visit every candidate integer point in lexicographic order.
    pub fn for_each(&self, mut visit: impl FnMut(&[i64])) {
        if self.empty {
            return;
        }
        if self.dim == 0 {
            visit(&[]);
            return;
        }
        self.walk(&mut Vec::new(), &mut visit);
    }

    /// Candidate integer points, lexicographically sorted.
    pub fn points(&self) -> Vec<Vec<i64>> {
        let mut out = Vec::new();
        self.for_each(|p| out.push(p.to_vec()));
        out
    }

    /// Parallel fold over the first coordinate; partial results are combined in
    /// ascending order of x_0, so the result does not depend on scheduling.
    pub fn par_fold<T, F, C>(&self, init: T, f: F, combine: C) -> T
    where
        T: Send + Sync + Clone,
        F: Fn(&mut T, &[i64]) + Sync,
        C: Fn(T, T) -> T + Sync,
    {
        if self.empty {
            return init;
        }
        if self.dim == 0 {
            let mut acc = init;
            f(&mut acc, &[]);
            return acc;
        }
        let Some((l, h)) = self.range(&[]) else { return init };
        let parts: Vec<T> = (l..=h)
            .into_par_iter()
            .map(|x0| {
                let mut acc = init.clone();
                let mut prefix = vec![x0];
                self.walk(&mut prefix, &mut |p| f(&mut acc, p));
                acc
            })
            .collect();
        parts.into_iter().fold(init, combine)
    }
}

/// Polytope {x : lo <= M x + c <= hi}.
pub fn box_preimage(m: &[Vec<f64>], c: &[f64], lo: &[f64], hi: &[f64]) -> Polytope {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (i, row) in m.iter().enumerate() {
        a.push(row.clone());
        b.push(hi[i] - c[i]);
        a.push(row.iter().map(|x| -x).collect());
        b.push(c[i] - lo[i]);
    }
    Polytope::new(&a, &b)
}

/// LLL reduction of the standard basis under the quadratic form x^T q x.
/// Returns the reduced basis vectors as the columns of a unimodular integer matrix.
pub fn lll_reduce(q: &[Vec<f64>]) -> Vec<Vec<i64>> {
    let n = q.len();
    let mut b: Vec<Vec<i64>> = (0..n).map(|i| (0..n).map(|j| (i == j) as i64).collect()).collect();
    // Gram-Schmidt data, recomputed from scratch: the dimension is tiny
    let gso = |b: &[Vec<i64>]| {
        let mut mu = vec![vec![0.0; n]; n];
        let mut bb = vec![0.0; n];
        let mut star: Vec<Vec<f64>> = Vec::new();
        for i in 0..n {
            let mut v: Vec<f64> = b[i].iter().map(|&x| x as f64).collect();
            for j in 0..i {
                let num: f64 = (0..n).map(|r| (0..n).map(|c| b[i][r] as f64 * q[r][c] * star[j][c]).sum::<f64>()).sum();
                mu[i][j] = if bb[j] > 0.0 { num / bb[j] } else { 0.0 };
                for r in 0..n {
                    v[r] -= mu[i][j] * star[j][r];
                }
            }
            bb[i] = (0..n).map(|r| (0..n).map(|c| v[r] * q[r][c] * v[c]).sum::<f64>()).sum();
            star.push(v);
        }
        (mu, bb)
    };
    let mut k = 1;
    let mut guard = 0;
    while k < n && guard < 10_000 {
        guard += 1;
        for j in (0..k).rev() {
            let (mu, _) = gso(&b);
            let r = mu[k][j].round() as i64;
            if r != 0 {
                for c in 0..n {
                    b[k][c] -= r * b[j][c];
                }
            }
        }
        let (mu, bb) = gso(&b);
        if bb[k] >= (0.99 - mu[k][k - 1] * mu[k][k - 1]) * bb[k - 1] {
            k += 1;
        } else {
            b.swap(k, k - 1);
            k = (k - 1).max(1);
        }
    }
    (0..n).map(|r| (0..n).map(|c| b[c][r]).collect()).collect()
}

/// Pairwise summation, used wherever float sums must be reproducible and accurate.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle() {
        // x >= 0, y >= 0, x + y <= 3
        let p = Polytope::new(&[vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]], &[0.0, 0.0, 3.0]);
        assert_eq!(p.points().len(), 10);
        let n = p.par_fold(0usize, |a, _| *a += 1, |a, b| a + b);
        assert_eq!(n, 10);
    }

    #[test]
    fn skew_box() {
        // |x - 1.5 y| <= 0.5, 0 <= y <= 4
        let p = box_preimage(
            &[vec![1.0, -1.5], vec![0.0, 1.0]],
            &[0.0, 0.0],
            &[-0.5, 0.0],
            &[0.5, 4.0],
        );
        let pts: Vec<_> = p.points().into_iter().filter(|v| (v[0] as f64 - 1.5 * v[1] as f64).abs() <= 0.5).collect();
        let brute = (-10..=10i64)
            .flat_map(|x| (0..=4i64).map(move |y| (x, y)))
            .filter(|&(x, y)| (x as f64 - 1.5 * y as f64).abs() <= 0.5)
            .count();
        assert_eq!(pts.len(), brute);
    }

    #[test]
    fn shifted_matches_fresh() {
        let m = vec![vec![1.0, -std::f64::consts::SQRT_2], vec![0.5, 2.0]];
        let base = box_preimage(&m, &[0.0, 0.0], &[-1.0, -1.0], &[1.0, 1.0]);
        let t = [0.3, -7.25];
        let mut a = Vec::new();
        base.for_each_shifted(&t, |x| a.push(x.to_vec()));
        let c: Vec<f64> = m.iter().map(|r| r[0] * t[0] + r[1] * t[1]).collect();
        let fresh = box_preimage(&m, &c, &[-1.0, -1.0], &[1.0, 1.0]).points();
        assert_eq!(a, fresh);
        assert!(!a.is_empty());
    }

    #[test]
    fn feasibility_without_bounds() {
        // y >= 1 alone is unbounded but feasible; y >= 1 and y <= 0 is not
        assert!(Polytope::new(&[vec![0.0, -1.0]], &[-1.0]).is_feasible());
        assert!(!Polytope::new(&[vec![0.0, -1.0], vec![0.0, 1.0]], &[-1.0, 0.0]).is_feasible());
    }

    #[test]
    fn lll_thin_slab() {
        // |x + sqrt2 y| small, |y| large: reduction finds convergents of sqrt2
        let a = [1.0, 2f64.sqrt()];
        let w = [1e-3, 1e3];
        let q: Vec<Vec<f64>> = (0..2).map(|i| (0..2).map(|j| a[i] * a[j] / (w[0] * w[0]) + if i == 1 && j == 1 { 1.0 / (w[1] * w[1]) } else { 0.0 }).collect()).collect();
        let u = lll_reduce(&q);
        let det = u[0][0] * u[1][1] - u[0][1] * u[1][0];
        assert_eq!(det.abs(), 1);
        let first = (u[0][0] as f64 + 2f64.sqrt() * u[1][0] as f64).abs();
        assert!(first < 0.05, "{u:?}");
    }

    #[test]
    fn pruned_matches_unpruned() {
        // many redundant cuts around a 3-d box
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..3 {
            for s in [1.0, -1.0] {
                let mut r = vec![0.0; 3];
                r[i] = s;
                a.push(r);
                b.push(3.0);
            }
        }
        for x in [1.0, -1.0] {
            for y in [1.0, -1.0] {
                for z in [1.0, -1.0] {
                    a.push(vec![x, y, z]);
                    b.push(7.5);
                }
            }
        }
        let pts = Polytope::new(&a, &b).points();
        let brute: Vec<Vec<i64>> = (-3..=3)
            .flat_map(|x| (-3..=3).flat_map(move |y| (-3..=3).map(move |z| vec![x, y, z])))
            .filter(|p: &Vec<i64>| p.iter().map(|v| v.abs()).sum::<i64>() as f64 <= 7.5)
            .collect();
        assert_eq!(pts, brute);
    }

    #[test]
    fn empty() {
        let p = Polytope::new(&[vec![1.0], vec![-1.0]], &[0.2, -0.8]);
        assert!(p.points().is_empty());
    }
}
