//! Hermite and Smith normal forms over the integers.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

pub type IMat = Vec<Vec<BigInt>>;

pub fn identity(n: usize) -> IMat {
    (0..n).map(|i| (0..n).map(|j| if i == j { BigInt::one() } else { BigInt::zero() }).collect()).collect()
}

pub fn from_i64(m: &[Vec<i64>]) -> IMat {
    m.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect()
}

pub fn mul(a: &IMat, b: &IMat) -> IMat {
    let n = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| row.iter().enumerate().fold(BigInt::zero(), |acc, (k, x)| acc + x * &b[k][j]))
                .collect()
        })
        .collect()
}

fn cols_of(a: &IMat) -> usize {
    a.first().map_or(0, |r| r.len())
}

/// Replace columns (i, j) by (p*ci + q*cj, r*ci + s*cj).
fn col_combine(m: &mut IMat, i: usize, j: usize, p: &BigInt, q: &BigInt, r: &BigInt, s: &BigInt) {
    for row in m.iter_mut() {
        let a = row[i].clone();
        let b = row[j].clone();
        row[i] = p * &a + q * &b;
        row[j] = r * &a + s * &b;
    }
}

fn row_combine(m: &mut IMat, i: usize, j: usize, p: &BigInt, q: &BigInt, r: &BigInt, s: &BigInt) {
    let a = m[i].clone();
    let b = m[j].clone();
    m[i] = a.iter().zip(&b).map(|(x, y)| p * x + q * y).collect();
    m[j] = a.iter().zip(&b).map(|(x, y)| r * x + s * y).collect();
}

/// Unimodular 2x2 step (p q; r s) sending (x, y) to (gcd, 0).
/// When x already divides y the first vector is left untouched, which keeps elimination from cycling.
fn gcd_step(x: &BigInt, y: &BigInt) -> (BigInt, BigInt, BigInt, BigInt) {
    if !x.is_zero() && (y % x).is_zero() {
        return (BigInt::one(), BigInt::zero(), -(y / x), BigInt::one());
    }
    let e = x.extended_gcd(y);
    let g = e.gcd;
    // [ci cj] -> [x' ci + y' cj, -(y/g) ci + (x/g) cj]
    (e.x, e.y, -(y / &g), x / &g)
}

/// Column-style Hermite normal form: returns (H, U) with A U = H, U unimodular.
/// H is in column echelon form, pivots positive, entries left of a pivot reduced into [0, pivot).
/// Nonzero columns of H come first and form a basis of the column lattice of A.
pub fn hnf(a: &IMat) -> (IMat, IMat) {
    let m = a.len();
    let n = cols_of(a);
    let mut h = a.clone();
    let mut u = identity(n);
    let mut k = 0;
    for i in 0..m {
        if k == n {
            break;
        }
        for j in k + 1..n {
            if h[i][j].is_zero() {
                continue;
            }
            let x = h[i][k].clone();
            let y = h[i][j].clone();
            let (p, q, r, s) = gcd_step(&x, &y);
            col_combine(&mut h, k, j, &p, &q, &r, &s);
            col_combine(&mut u, k, j, &p, &q, &r, &s);
        }
        if h[i][k].is_zero() {
            continue;
        }
        if h[i][k].is_negative() {
            for row in h.iter_mut() {
                row[k] = -row[k].clone();
            }
            for row in u.iter_mut() {
                row[k] = -row[k].clone();
            }
        }
        let piv = h[i][k].clone();
        for j in 0..k {
            let f = h[i][j].div_floor(&piv);
            if !f.is_zero() {
                for row in h.iter_mut() {
                    let t = &f * &row[k];
                    row[j] -= t;
                }
                for row in u.iter_mut() {
                    let t = &f * &row[k];
                    row[j] -= t;
                }
            }
        }
        k += 1;
    }
    (h, u)
}

/// Number of nonzero leading columns of an HNF.
pub fn hnf_rank(h: &IMat) -> usize {
    let n = cols_of(h);
    (0..n).take_while(|&j| h.iter().any(|r| !r[j].is_zero())).count()
}

/// Columns of the HNF that span the column lattice.
pub fn lattice_basis(a: &IMat) -> IMat {
    let (h, _) = hnf(a);
    let r = hnf_rank(&h);
    h.iter().map(|row| row[..r].to_vec()).collect()
}

/// Equality of the lattices spanned by the columns of two matrices with the same row count.
pub fn same_column_lattice(a: &IMat, b: &IMat) -> bool {
    lattice_basis(a) == lattice_basis(b)
}

/// Smith normal form: returns (S, U, V) with U A V = S, U and V unimodular,
/// S diagonal with nonnegative entries d_1 | d_2 | ...
pub fn snf(a: &IMat) -> (IMat, IMat, IMat) {
    let m = a.len();
    let n = cols_of(a);
    let mut s = a.clone();
    let mut u = identity(m);
    let mut v = identity(n);
    let mut t = 0;
    while t < m.min(n) {
        // smallest nonzero entry of the trailing block
        let mut best: Option<(usize, usize)> = None;
        for i in t..m {
            for j in t..n {
                if !s[i][j].is_zero() && best.is_none_or(|(bi, bj)| s[i][j].abs() < s[bi][bj].abs()) {
                    best = Some((i, j));
                }
            }
        }
        let Some((bi, bj)) = best else { break };
        s.swap(t, bi);
        u.swap(t, bi);
        for row in s.iter_mut() {
            row.swap(t, bj);
        }
        for row in v.iter_mut() {
            row.swap(t, bj);
        }
        loop {
            let mut changed = false;
            for i in t + 1..m {
                if s[i][t].is_zero() {
                    continue;
                }
                let x = s[t][t].clone();
                let y = s[i][t].clone();
                let (p, q, r, w) = gcd_step(&x, &y);
                row_combine(&mut s, t, i, &p, &q, &r, &w);
                row_combine(&mut u, t, i, &p, &q, &r, &w);
                changed = true;
            }
            for j in t + 1..n {
                if s[t][j].is_zero() {
                    continue;
                }
                let x = s[t][t].clone();
                let y = s[t][j].clone();
                let (p, q, r, w) = gcd_step(&x, &y);
                col_combine(&mut s, t, j, &p, &q, &r, &w);
                col_combine(&mut v, t, j, &p, &q, &r, &w);
                changed = true;
            }
            let col_clear = (t + 1..m).all(|i| s[i][t].is_zero());
            let row_clear = (t + 1..n).all(|j| s[t][j].is_zero());
            if col_clear && row_clear {
                // divisibility: fold in any row whose entries the pivot fails to divide
                let piv = s[t][t].clone();
                let bad = (t + 1..m).find(|&i| (t + 1..n).any(|j| !(&s[i][j] % &piv).is_zero()));
                match bad {
                    Some(i) => {
                        let one = BigInt::one();
                        let zero = BigInt::zero();
                        row_combine(&mut s, t, i, &one, &one, &zero, &one);
                        row_combine(&mut u, t, i, &one, &one, &zero, &one);
                    }
                    None => break,
                }
            } else if !changed {
                break;
            }
        }
        if s[t][t].is_negative() {
            s[t] = s[t].iter().map(|x| -x).collect();
            u[t] = u[t].iter().map(|x| -x).collect();
        }
        t += 1;
    }
    (s, u, v)
}

pub fn snf_diagonal(a: &IMat) -> Vec<BigInt> {
    let (s, _, _) = snf(a);
    (0..s.len().min(cols_of(&s))).map(|i| s[i][i].clone()).filter(|x| !x.is_zero()).collect()
}

/// Determinant of a square integer matrix by fraction-free (Bareiss) elimination.
pub fn det(a: &IMat) -> BigInt {
    let n = a.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut m = a.clone();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n {
        if m[k][k].is_zero() {
            let Some(p) = (k + 1..n).find(|&i| !m[i][k].is_zero()) else { return BigInt::zero() };
            m.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                m[i][j] = (&m[i][j] * &m[k][k] - &m[i][k] * &m[k][j]) / &prev;
            }
        }
        prev = m[k][k].clone();
    }
    sign * &m[n - 1][n - 1]
}

pub fn is_unimodular(a: &IMat) -> bool {
    det(a).abs().is_one()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hnf_identity() {
        let a = identity(3);
        let (h, u) = hnf(&a);
        assert_eq!(h, a);
        assert_eq!(u, a);
    }

    #[test]
    fn snf_examples() {
        let a = from_i64(&[vec![2, 4], vec![0, 6]]);
        let (s, u, v) = snf(&a);
        assert_eq!(mul(&mul(&u, &a), &v), s);
        // gcd of entries is 2 and |det| = 12, so the invariant factors are 2 and 6
        assert_eq!(snf_diagonal(&a), vec![BigInt::from(2), BigInt::from(6)]);
        let b = from_i64(&[vec![1, -2, 1, 0], vec![0, 1, -2, 1]]);
        assert_eq!(snf_diagonal(&b), vec![BigInt::one(), BigInt::one()]);
    }

    #[test]
    fn hnf_kernel_of_ap_form() {
        let a = from_i64(&[vec![1, -2, 1, 0]]);
        let (h, u) = hnf(&a);
        assert_eq!(mul(&a, &u), h);
        assert_eq!(hnf_rank(&h), 1);
        assert!(is_unimodular(&u));
    }

    #[test]
    fn bareiss_det() {
        let a = from_i64(&[vec![2, 1, 3], vec![0, -1, 4], vec![5, 2, 0]]);
        assert_eq!(det(&a), BigInt::from(2 * (0 - 8) - (0 - 20) + 3 * 5));
    }
}
