//! Dense univariate polynomials over the rationals, coefficients stored low degree first.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rat = BigRational;
pub type Poly = Vec<Rat>;

pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn trim(p: &mut Poly) {
    while p.last().is_some_and(|c| c.is_zero()) {
        p.pop();
    }
}

pub fn degree(p: &Poly) -> Option<usize> {
    let mut d = p.len();
    while d > 0 && p[d - 1].is_zero() {
        d -= 1;
    }
    d.checked_sub(1)
}

pub fn add(a: &Poly, b: &Poly) -> Poly {
    let n = a.len().max(b.len());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = a.get(i).cloned().unwrap_or_else(Rat::zero);
        let y = b.get(i).cloned().unwrap_or_else(Rat::zero);
        out.push(x + y);
    }
    trim(&mut out);
    out
}

pub fn sub(a: &Poly, b: &Poly) -> Poly {
    let n = a.len().max(b.len());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = a.get(i).cloned().unwrap_or_else(Rat::zero);
        let y = b.get(i).cloned().unwrap_or_else(Rat::zero);
        out.push(x - y);
    }
    trim(&mut out);
    out
}

pub fn mul(a: &Poly, b: &Poly) -> Poly {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Rat::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            if !y.is_zero() {
                out[i + j] += x * y;
            }
        }
    }
    trim(&mut out);
    out
}

pub fn scale(a: &Poly, c: &Rat) -> Poly {
    let mut out: Poly = a.iter().map(|x| x * c).collect();
    trim(&mut out);
    out
}

/// Quotient and remainder of `a` by nonzero `b`.
pub fn divrem(a: &Poly, b: &Poly) -> (Poly, Poly) {
    let db = degree(b).expect("division by the zero polynomial");
    let lead = b[db].clone();
    let mut r = a.clone();
    trim(&mut r);
    if r.len() <= db {
        return (Vec::new(), r);
    }
    let mut q = vec![Rat::zero(); r.len() - db];
    while let Some(dr) = degree(&r) {
        if dr < db {
            break;
        }
        let c = &r[dr] / &lead;
        let shift = dr - db;
        for k in 0..=db {
            if !b[k].is_zero() {
                let t = &c * &b[k];
                r[k + shift] -= t;
            }
        }
        q[shift] = c;
        trim(&mut r);
    }
    trim(&mut q);
    (q, r)
}

/// Remainder of `a` modulo a monic polynomial; faster than `divrem` since no division occurs.
pub fn rem_monic(a: &Poly, m: &Poly) -> Poly {
    let n = m.len() - 1;
    let mut r = a.clone();
    trim(&mut r);
    while r.len() > n {
        let top = r.len() - 1;
        let c = r[top].clone();
        let shift = top - n;
        if !c.is_zero() {
            for k in 0..n {
                if !m[k].is_zero() {
                    r[k + shift] -= &c * &m[k];
                }
            }
        }
        r.pop();
        trim(&mut r);
    }
    r
}

pub fn derivative(a: &Poly) -> Poly {
    let mut out: Poly = a
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, c)| c * rat(i as i64))
        .collect();
    trim(&mut out);
    out
}

pub fn eval(a: &Poly, x: &Rat) -> Rat {
    let mut acc = Rat::zero();
    for c in a.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

pub fn sign_at(a: &Poly, x: &Rat) -> i32 {
    let v = eval(a, x);
    if v.is_zero() {
        0
    } else if v.is_positive() {
        1
    } else {
        -1
    }
}

/// Inverse of `a` modulo the irreducible `m` by the extended Euclidean algorithm.
/// Returns `None` when `gcd(a, m) != 1`.
pub fn inverse_mod(a: &Poly, m: &Poly) -> Option<Poly> {
    let (mut r0, mut r1) = (m.clone(), rem_monic(a, m));
    let (mut s0, mut s1): (Poly, Poly) = (Vec::new(), vec![Rat::one()]);
    if r1.is_empty() {
        return None;
    }
    while degree(&r1).is_some_and(|d| d > 0) {
        let (q, r) = divrem(&r0, &r1);
        let s = sub(&s0, &mul(&q, &s1));
        r0 = std::mem::replace(&mut r1, r);
        s0 = std::mem::replace(&mut s1, s);
        if r1.is_empty() {
            return None;
        }
    }
    let c = r1[0].clone();
    let inv = scale(&s1, &(Rat::one() / c));
    Some(rem_monic(&inv, m))
}

/// Number of distinct real roots in the half-open interval (lo, hi] via a Sturm sequence.
pub fn sturm_count(p: &Poly, lo: &Rat, hi: &Rat) -> usize {
    let mut seq = vec![p.clone(), derivative(p)];
    loop {
        let n = seq.len();
        if seq[n - 1].is_empty() {
            seq.pop();
            break;
        }
        let (_, r) = divrem(&seq[n - 2], &seq[n - 1]);
        if r.is_empty() {
            break;
        }
        seq.push(scale(&r, &rat(-1)));
    }
    let changes = |x: &Rat| {
        let mut last = 0;
        let mut count: usize = 0;
        for q in &seq {
            let s = sign_at(q, x);
            if s != 0 {
                if last != 0 && s != last {
                    count += 1;
                }
                last = s;
            }
        }
        count
    };
    changes(lo).saturating_sub(changes(hi))
}

pub fn is_squarefree_poly(p: &Poly) -> bool {
    let d = derivative(p);
    let mut a = p.clone();
    let mut b = d;
    while !b.is_empty() {
        let (_, r) = divrem(&a, &b);
        a = b;
        b = r;
    }
    degree(&a) == Some(0)
}

pub fn rat_abs(x: &Rat) -> Rat {
    x.abs()
}
