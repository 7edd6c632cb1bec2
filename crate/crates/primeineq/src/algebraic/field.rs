use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::poly::{self, rat, Poly, Rat};
use super::AlgebraError;

pub const DEFAULT_DEGREE_CAP: usize = 64;
pub const SIGN_REFINE_CAP: usize = 10_000;
/// Bits of root isolation precomputed at construction.
const STORED_BITS: u32 = 320;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Irreducibility {
    /// Proven by construction (multiquadratic fields, the rationals).
    Proven,
    /// Supplied by the caller and not checked.
    Trusted,
}

/// A real number field given by a monic minimal polynomial and an isolating interval
/// for the chosen real root.
#[derive(Debug)]
pub struct NumberField {
    min_poly: Poly,
    /// min_poly with denominators cleared; same sign everywhere
    int_poly: Vec<BigInt>,
    root_interval: (Rat, Rat),
    refined: Dyadic,
    /// sign of min_poly at the left end of any isolating interval
    sign_lo: i32,
    irreducible: Irreducibility,
    sqrts: Vec<(u64, Poly)>,
    /// multiplicatively independent radicands with sqrt embedded, in `sqrts`
    basis: Vec<u64>,
}

/// Interval [lo / 2^k, hi / 2^k].
#[derive(Clone, Debug, PartialEq)]
struct Dyadic {
    lo: BigInt,
    hi: BigInt,
    k: u32,
}

impl Dyadic {
    fn width_bits_below(&self, bits: u32) -> bool {
        // (hi - lo) / 2^k <= 2^-bits
        let w = &self.hi - &self.lo;
        w.is_zero() || (w.bits() as i64) + bits as i64 <= self.k as i64
    }
    fn to_rats(&self) -> (Rat, Rat) {
        let d = BigInt::one() << self.k;
        (Rat::new(self.lo.clone(), d.clone()), Rat::new(self.hi.clone(), d))
    }
}

fn clear_denominators(p: &Poly) -> Vec<BigInt> {
    let d = lcm_denominators(p.iter());
    p.iter().map(|c| (c * Rat::from_integer(d.clone())).to_integer()).collect()
}

/// sign of p(a / 2^k) for integer coefficients p
fn sign_dyadic(p: &[BigInt], a: &BigInt, k: u32) -> i32 {
    let n = p.len() - 1;
    let mut acc = p[n].clone();
    for j in (0..n).rev() {
        acc = acc * a + (&p[j] << (k as usize * (n - j)));
    }
    sign_of(&acc)
}

fn sign_of(x: &BigInt) -> i32 {
    if x.is_zero() {
        0
    } else if x.is_positive() {
        1
    } else {
        -1
    }
}

fn bisect_dyadic(p: &[BigInt], sign_lo: i32, iv: &mut Dyadic) {
    let mid = &iv.lo + &iv.hi;
    iv.k += 1;
    let s = sign_dyadic(p, &mid, iv.k);
    if s == 0 {
        iv.lo = mid.clone();
        iv.hi = mid;
    } else if s == sign_lo {
        iv.lo = mid;
        iv.hi <<= 1;
    } else {
        iv.lo <<= 1;
        iv.hi = mid;
    }
}

fn refine_to(p: &[BigInt], sign_lo: i32, iv: &Dyadic, bits: u32) -> Dyadic {
    let mut out = iv.clone();
    while !out.width_bits_below(bits) && out.lo != out.hi {
        bisect_dyadic(p, sign_lo, &mut out);
    }
    out
}

/// Integer interval Horner: encloses 2^(k n) * D * e(x) for x in the dyadic interval,
/// with D the common denominator of the coordinates. Returns (lo, hi, scale exponent, D).
fn enclose_int(coords: &[BigInt], iv: &Dyadic) -> (BigInt, BigInt) {
    let n = coords.len() - 1;
    let mut a = coords[n].clone();
    let mut b = coords[n].clone();
    for j in (0..n).rev() {
        let p = [&a * &iv.lo, &a * &iv.hi, &b * &iv.lo, &b * &iv.hi];
        let mut mn = p[0].clone();
        let mut mx = p[0].clone();
        for x in &p[1..] {
            if *x < mn {
                mn = x.clone();
            }
            if *x > mx {
                mx = x.clone();
            }
        }
        let c = &coords[j] << (iv.k as usize * (n - j));
        a = mn + &c;
        b = mx + c;
    }
    (a, b)
}

pub type FieldRef = Arc<NumberField>;

impl PartialEq for NumberField {
    fn eq(&self, other: &Self) -> bool {
        let (a0, a1) = self.refined.to_rats();
        let (b0, b1) = other.refined.to_rats();
        self.min_poly == other.min_poly && a0 <= b1 && b0 <= a1
    }
}


impl NumberField {
    /// The rationals, as the degree-one field with generator 0.
    pub fn rationals() -> FieldRef {
        Arc::new(NumberField {
            min_poly: vec![Rat::zero(), Rat::one()],
            int_poly: vec![BigInt::zero(), BigInt::one()],
            root_interval: (rat(-1), rat(1)),
            refined: Dyadic { lo: BigInt::zero(), hi: BigInt::zero(), k: 0 },
            sign_lo: -1,
            irreducible: Irreducibility::Proven,
            sqrts: Vec::new(),
            basis: Vec::new(),
        })
    }

    /// A field from a caller-supplied monic polynomial and isolating interval.
    /// Irreducibility is recorded as trusted, root isolation is checked by Sturm count.
    pub fn from_min_poly(min_poly: Poly, lo: Rat, hi: Rat) -> Result<FieldRef, AlgebraError> {
        let mut p = min_poly;
        poly::trim(&mut p);
        let deg = poly::degree(&p).ok_or(AlgebraError::BadPolynomial("zero polynomial".into()))?;
        if deg == 0 {
            return Err(AlgebraError::BadPolynomial("constant polynomial".into()));
        }
        if !p[deg].is_one() {
            return Err(AlgebraError::BadPolynomial("polynomial must be monic".into()));
        }
        if lo >= hi {
            return Err(AlgebraError::BadInterval);
        }
        if !poly::is_squarefree_poly(&p) {
            return Err(AlgebraError::BadPolynomial("polynomial has repeated roots".into()));
        }
        let s_lo = poly::sign_at(&p, &lo);
        let s_hi = poly::sign_at(&p, &hi);
        if s_lo == 0 || s_hi == 0 || s_lo == s_hi {
            return Err(AlgebraError::NoSignChange);
        }
        let count = poly::sturm_count(&p, &lo, &hi);
        if count != 1 {
            return Err(AlgebraError::RootCount(count));
        }
        // shrink the rational interval, then round outward to a dyadic one that still
        // isolates the root
        let int_poly = clear_denominators(&p);
        let (mut a, mut b) = (lo.clone(), hi.clone());
        let two = rat(2);
        let mut k = 8u32;
        let dy = loop {
            let scale = Rat::from_integer(BigInt::one() << k);
            let dl = (&a * &scale).floor().to_integer();
            let dh = (&b * &scale).ceil().to_integer();
            let rl = Rat::new(dl.clone(), BigInt::one() << k);
            let rh = Rat::new(dh.clone(), BigInt::one() << k);
            let sl = poly::sign_at(&p, &rl);
            let sh = poly::sign_at(&p, &rh);
            if sl != 0 && sh != 0 && sl != sh && poly::sturm_count(&p, &rl, &rh) == 1 {
                break Dyadic { lo: dl, hi: dh, k };
            }
            let mid = (&a + &b) / &two;
            if poly::sign_at(&p, &mid) == s_lo {
                a = mid;
            } else {
                b = mid;
            }
            k += 2;
            if k > 4 * STORED_BITS {
                return Err(AlgebraError::RootCount(count));
            }
        };
        let sign_lo = sign_dyadic(&int_poly, &dy.lo, dy.k);
        let refined = refine_to(&int_poly, sign_lo, &dy, STORED_BITS);
        Ok(Arc::new(NumberField {
            min_poly: p,
            int_poly,
            root_interval: (lo, hi),
            refined,
            sign_lo,
            irreducible: Irreducibility::Trusted,
            sqrts: Vec::new(),
            basis: Vec::new(),
        }))
    }

    pub fn degree(&self) -> usize {
        self.min_poly.len() - 1
    }
    pub fn min_poly(&self) -> &Poly {
        &self.min_poly
    }
    pub fn root_interval(&self) -> (&Rat, &Rat) {
        (&self.root_interval.0, &self.root_interval.1)
    }
    pub fn irreducibility(&self) -> Irreducibility {
        self.irreducible
    }
    /// Radicands whose square roots were embedded at construction.
    pub fn sqrt_radicands(&self) -> Vec<u64> {
        self.sqrts.iter().map(|(k, _)| *k).collect()
    }

    /// Isolating interval for the generator of width at most 2^-bits.
    pub fn root_enclosure(&self, bits: u32) -> (Rat, Rat) {
        self.enclosure_dyadic(bits).to_rats()
    }

    fn enclosure_dyadic(&self, bits: u32) -> Dyadic {
        refine_to(&self.int_poly, self.sign_lo, &self.refined, bits)
    }
}

/// Exact element of a number field, in power-basis coordinates.
#[derive(Clone)]
pub struct FieldElement {
    field: FieldRef,
    coords: Poly,
}

impl fmt::Debug for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(r) = self.as_rational() {
            write!(f, "{}", r)
        } else {
            write!(f, "{:.12}", self.to_f64())
        }
    }
}

impl PartialEq for FieldElement {
    fn eq(&self, other: &Self) -> bool {
        self.same_field(other) && self.coords == other.coords
    }
}

impl FieldElement {
    pub fn new(field: &FieldRef, coords: Poly) -> Self {
        let mut c = poly::rem_monic(&coords, &field.min_poly);
        poly::trim(&mut c);
        FieldElement { field: field.clone(), coords: c }
    }
    pub fn from_rat(field: &FieldRef, r: Rat) -> Self {
        let coords = if r.is_zero() { Vec::new() } else { vec![r] };
        FieldElement { field: field.clone(), coords }
    }
    pub fn from_int(field: &FieldRef, n: i64) -> Self {
        Self::from_rat(field, rat(n))
    }
    pub fn zero(field: &FieldRef) -> Self {
        FieldElement { field: field.clone(), coords: Vec::new() }
    }
    pub fn one(field: &FieldRef) -> Self {
        Self::from_int(field, 1)
    }
    /// The primitive element.
    pub fn generator(field: &FieldRef) -> Self {
        Self::new(field, vec![Rat::zero(), Rat::one()])
    }
    /// Embedding of sqrt(k), or `None` when the field does not contain it.
    pub fn sqrt(field: &FieldRef, k: u64) -> Option<Self> {
        if k == 0 {
            return Some(Self::zero(field));
        }
        let (g, s) = squarefree_split(k);
        let g = Rat::from_integer(BigInt::from(g));
        if s == 1 {
            return Some(Self::from_rat(field, g));
        }
        if let Some((_, c)) = field.sqrts.iter().find(|(r, _)| *r == s) {
            return Some(FieldElement { field: field.clone(), coords: poly::scale(c, &g) });
        }
        let r = field.basis.len();
        for mask in 1u64..(1u64 << r) {
            let mut prod = BigInt::from(s);
            let mut e = Self::one(field);
            for (i, &b) in field.basis.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    prod *= b;
                    e = &e * &Self::sqrt(field, b)?;
                }
            }
            if let Some(t) = isqrt_exact(&prod) {
                // sqrt(s) = prod_i sqrt(b_i) * t / (s' ) with prod = s * prod b_i = t^2
                let pb: BigInt = &prod / BigInt::from(s);
                return Some(e.scale(&(Rat::new(t, pb) * g)));
            }
        }
        None
    }

    pub fn field(&self) -> &FieldRef {
        &self.field
    }
    /// Power-basis coordinates padded to the field degree.
    pub fn coords(&self) -> Vec<Rat> {
        let mut c = self.coords.clone();
        c.resize(self.field.degree(), Rat::zero());
        c
    }
    pub fn same_field(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.field, &other.field) || *self.field == *other.field
    }
    pub fn is_zero(&self) -> bool {
        self.coords.is_empty()
    }
    pub fn as_rational(&self) -> Option<Rat> {
        match self.coords.len() {
            0 => Some(Rat::zero()),
            1 => Some(self.coords[0].clone()),
            _ => None,
        }
    }

    fn check(&self, other: &Self) -> Result<(), AlgebraError> {
        if self.same_field(other) {
            Ok(())
        } else {
            Err(AlgebraError::FieldMismatch)
        }
    }

    pub fn try_add(&self, o: &Self) -> Result<Self, AlgebraError> {
        self.check(o)?;
        Ok(FieldElement { field: self.field.clone(), coords: poly::add(&self.coords, &o.coords) })
    }
    pub fn try_sub(&self, o: &Self) -> Result<Self, AlgebraError> {
        self.check(o)?;
        Ok(FieldElement { field: self.field.clone(), coords: poly::sub(&self.coords, &o.coords) })
    }
    pub fn try_mul(&self, o: &Self) -> Result<Self, AlgebraError> {
        self.check(o)?;
        if self.coords.len() <= 1 || o.coords.len() <= 1 {
            // scalar fast path, covers the whole rational case
            let coords = if self.coords.len() <= 1 {
                match self.coords.first() {
                    None => Vec::new(),
                    Some(c) => poly::scale(&o.coords, c),
                }
            } else {
                match o.coords.first() {
                    None => Vec::new(),
                    Some(c) => poly::scale(&self.coords, c),
                }
            };
            return Ok(FieldElement { field: self.field.clone(), coords });
        }
        let p = poly::mul(&self.coords, &o.coords);
        Ok(FieldElement { field: self.field.clone(), coords: poly::rem_monic(&p, &self.field.min_poly) })
    }
    pub fn try_div(&self, o: &Self) -> Result<Self, AlgebraError> {
        self.check(o)?;
        let inv = o.inv()?;
        self.try_mul(&inv)
    }
    pub fn inv(&self) -> Result<Self, AlgebraError> {
        if self.is_zero() {
            return Err(AlgebraError::DivisionByZero);
        }
        if self.coords.len() == 1 {
            return Ok(Self::from_rat(&self.field, Rat::one() / &self.coords[0]));
        }
        let c = poly::inverse_mod(&self.coords, &self.field.min_poly).ok_or(AlgebraError::NotInvertible)?;
        Ok(FieldElement { field: self.field.clone(), coords: c })
    }
    pub fn scale(&self, r: &Rat) -> Self {
        FieldElement { field: self.field.clone(), coords: poly::scale(&self.coords, r) }
    }

    /// Integer coordinates and their common denominator.
    fn int_coords(&self) -> (Vec<BigInt>, BigInt) {
        let d = lcm_denominators(self.coords.iter());
        let c = self.coords.iter().map(|x| (x * Rat::from_integer(d.clone())).to_integer()).collect();
        (c, d)
    }

    fn enclose(&self, iv: &Dyadic) -> (Rat, Rat) {
        let (c, d) = self.int_coords();
        let (a, b) = enclose_int(&c, iv);
        let den = d << (iv.k as usize * (c.len() - 1));
        (Rat::new(a, den.clone()), Rat::new(b, den))
    }

    /// Rational interval containing the value, computed from a root enclosure of width 2^-bits.
    pub fn eval(&self, bits: u32) -> (Rat, Rat) {
        if let Some(r) = self.as_rational() {
            return (r.clone(), r);
        }
        let iv = self.field.enclosure_dyadic(bits);
        self.enclose(&iv)
    }

    pub fn to_f64(&self) -> f64 {
        if let Some(r) = self.as_rational() {
            return rat_to_f64(&r);
        }
        let (a, b) = self.enclose(&self.field.refined);
        rat_to_f64(&((a + b) / rat(2)))
    }

    /// Exact sign. Refines the root enclosure until the value interval excludes zero.
    pub fn sign(&self) -> i32 {
        if self.is_zero() {
            return 0;
        }
        if let Some(r) = self.as_rational() {
            return if r.is_positive() { 1 } else { -1 };
        }
        let (c, _) = self.int_coords();
        let mut iv = self.field.refined.clone();
        for _ in 0..SIGN_REFINE_CAP {
            let (a, b) = enclose_int(&c, &iv);
            if a.is_positive() {
                return 1;
            }
            if b.is_negative() {
                return -1;
            }
            if iv.lo == iv.hi {
                break;
            }
            bisect_dyadic(&self.field.int_poly, self.field.sign_lo, &mut iv);
        }
        panic!("sign refinement exceeded {SIGN_REFINE_CAP} bisections for a nonzero element");
    }

    pub fn abs(&self) -> Self {
        if self.sign() < 0 {
            -self
        } else {
            self.clone()
        }
    }

    /// Text in the scalar grammar over the square-root basis, e.g. "1/2 - 3*sqrt6"; falls back
    /// to a decimal when the field is not generated by the embedded square roots.
    pub fn surd_string(&self) -> String {
        if let Some(r) = self.as_rational() {
            return r.to_string();
        }
        let r = self.field.basis.len();
        let deg = self.field.degree();
        if r >= 63 || (1usize << r) != deg {
            return self.to_string();
        }
        let mut ks = Vec::with_capacity(deg);
        let mut cols = Vec::with_capacity(deg);
        for mask in 0u64..(1u64 << r) {
            let k: BigInt = self.field.basis.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &b)| BigInt::from(b)).product();
            let Some(k64) = k.to_u64() else { return self.to_string() };
            let Some(e) = Self::sqrt(&self.field, k64) else { return self.to_string() };
            let (g, sf) = squarefree_split(k64);
            ks.push((g, sf));
            cols.push(e.coords());
        }
        let m: Vec<Vec<Rat>> = (0..deg).map(|i| cols.iter().map(|c| c[i].clone()).collect()).collect();
        let Some(c) = super::linalg::solve(&m, &self.coords()) else { return self.to_string() };
        let mut out = String::new();
        for ((g, sf), ci) in ks.iter().zip(&c) {
            if ci.is_zero() {
                continue;
            }
            let coef = ci * Rat::from_integer(BigInt::from(*g));
            let neg = coef < Rat::zero();
            let a = coef.abs();
            let body = match (*sf == 1, a.is_one()) {
                (true, _) => a.to_string(),
                (false, true) => format!("sqrt{sf}"),
                (false, false) => format!("{a}*sqrt{sf}"),
            };
            match (out.is_empty(), neg) {
                (true, true) => out.push('-'),
                (true, false) => {}
                (false, true) => out.push_str(" - "),
                (false, false) => out.push_str(" + "),
            }
            out.push_str(&body);
        }
        out
    }

    /// Coordinates with denominators cleared by the least common multiple; used for JSON output.
    pub fn coord_strings(&self) -> Vec<String> {
        self.coords().iter().map(|c| c.to_string()).collect()
    }
}

pub fn rat_to_f64(r: &Rat) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    // scale both parts down to a common size before converting
    let nb = r.numer().bits() as i64;
    let db = r.denom().bits() as i64;
    let shift_n = (nb - 60).max(0) as usize;
    let shift_d = (db - 60).max(0) as usize;
    let n = (r.numer() >> shift_n).to_f64().unwrap_or(0.0);
    let d = (r.denom() >> shift_d).to_f64().unwrap_or(1.0);
    n / d * 2f64.powi(shift_n as i32 - shift_d as i32)
}

pub fn rat_from_f64(x: f64) -> Rat {
    Rat::from_float(x).expect("finite float")
}

macro_rules! binop {
    ($tr:ident, $m:ident, $f:ident) => {
        impl $tr for &FieldElement {
            type Output = FieldElement;
            fn $m(self, o: &FieldElement) -> FieldElement {
                self.$f(o).expect("field elements from different fields")
            }
        }
        impl $tr for FieldElement {
            type Output = FieldElement;
            fn $m(self, o: FieldElement) -> FieldElement {
                (&self).$f(&o).expect("field elements from different fields")
            }
        }
    };
}
binop!(Add, add, try_add);
binop!(Sub, sub, try_sub);
binop!(Mul, mul, try_mul);

impl Neg for &FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        FieldElement { field: self.field.clone(), coords: poly::scale(&self.coords, &rat(-1)) }
    }
}
impl Neg for FieldElement {
    type Output = FieldElement;
    fn neg(self) -> FieldElement {
        -&self
    }
}

fn factor_small(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2u64;
    while p * p <= n {
        if n.is_multiple_of(p) {
            let mut e = 0;
            while n.is_multiple_of(p) {
                n /= p;
                e += 1;
            }
            out.push((p, e));
        }
        p += if p == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn is_squarefree_u64(n: u64) -> bool {
    n >= 1 && factor_small(n).iter().all(|&(_, e)| e == 1)
}

/// Split n = g^2 * s with s squarefree.
pub fn squarefree_split(n: u64) -> (u64, u64) {
    let mut g = 1u64;
    let mut s = 1u64;
    for (p, e) in factor_small(n) {
        g *= p.pow(e / 2);
        if e % 2 == 1 {
            s *= p;
        }
    }
    (g, s)
}

fn isqrt_exact(n: &BigInt) -> Option<BigInt> {
    let r = n.sqrt();
    if &(&r * &r) == n {
        Some(r)
    } else {
        None
    }
}

/// Solve M X = B over the rationals, M square and invertible.
fn solve_rat(mut m: Vec<Vec<Rat>>, mut b: Vec<Vec<Rat>>) -> Vec<Vec<Rat>> {
    let n = m.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero()).expect("singular power matrix");
        m.swap(col, piv);
        b.swap(col, piv);
        let inv = Rat::one() / &m[col][col];
        for x in m[col].iter_mut() {
            *x *= &inv;
        }
        for x in b[col].iter_mut() {
            *x *= &inv;
        }
        let prow = m[col].clone();
        let brow = b[col].clone();
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for (x, y) in m[r].iter_mut().zip(&prow) {
                    if !y.is_zero() {
                        *x -= &f * y;
                    }
                }
                for (x, y) in b[r].iter_mut().zip(&brow) {
                    if !y.is_zero() {
                        *x -= &f * y;
                    }
                }
            }
        }
    }
    b
}

pub fn field_from_sqrts(ks: &[u64]) -> Result<FieldRef, AlgebraError> {
    field_from_sqrts_capped(ks, DEFAULT_DEGREE_CAP)
}

/// Multiquadratic field Q(sqrt k_1, ..., sqrt k_r) with primitive element the sum of the
/// square roots of a multiplicatively independent subfamily.
pub fn field_from_sqrts_capped(ks: &[u64], cap: usize) -> Result<FieldRef, AlgebraError> {
    let mut seen = std::collections::BTreeSet::new();
    for &k in ks {
        if !is_squarefree_u64(k) {
            return Err(AlgebraError::NotSquarefree(k));
        }
        if !seen.insert(k) {
            return Err(AlgebraError::Duplicate(k));
        }
    }
    let ks: Vec<u64> = ks.iter().copied().filter(|&k| k != 1).collect();
    if ks.is_empty() {
        return Ok(NumberField::rationals());
    }
    // F2 elimination on prime-exponent vectors. Each reduced row keeps the mask of
    // basis members it is a combination of.
    let mut rows: Vec<(u64, std::collections::BTreeSet<u64>, u64)> = Vec::new();
    let mut basis: Vec<u64> = Vec::new();
    let mut combos: Vec<u64> = Vec::new();
    for &k in &ks {
        let mut v: std::collections::BTreeSet<u64> = factor_small(k).into_iter().map(|(p, _)| p).collect();
        let mut mask = 0u64;
        for (piv, rv, rm) in &rows {
            if v.contains(piv) {
                v = v.symmetric_difference(rv).copied().collect();
                mask ^= rm;
            }
        }
        if v.is_empty() {
            combos.push(mask);
        } else {
            if basis.len() >= 63 {
                return Err(AlgebraError::DegreeOverflow { degree: usize::MAX, cap });
            }
            let idx = basis.len();
            basis.push(k);
            let m = mask ^ (1u64 << idx);
            let piv = *v.iter().next().unwrap();
            rows.push((piv, v, m));
            combos.push(1u64 << idx);
        }
    }
    let r = basis.len();
    let n = 1usize << r;
    if n > cap {
        return Err(AlgebraError::DegreeOverflow { degree: n, cap });
    }
    let b: Vec<BigInt> = basis.iter().map(|&x| BigInt::from(x)).collect();
    // powers of theta in the basis e_S = prod_{i in S} sqrt(b_i)
    let mut powers: Vec<Vec<BigInt>> = Vec::with_capacity(n + 1);
    let mut cur = vec![BigInt::zero(); n];
    cur[0] = BigInt::one();
    powers.push(cur.clone());
    for _ in 0..n {
        let mut next = vec![BigInt::zero(); n];
        for (t, c) in cur.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            for i in 0..r {
                let t2 = t ^ (1 << i);
                if t & (1 << i) != 0 {
                    next[t2] += c * &b[i];
                } else {
                    next[t2] += c;
                }
            }
        }
        cur = next;
        powers.push(cur.clone());
    }
    let m: Vec<Vec<Rat>> =
        (0..n).map(|s| (0..n).map(|j| Rat::from_integer(powers[j][s].clone())).collect()).collect();
    // right-hand sides: theta^n, then e_S for each requested radicand
    let mut rhs: Vec<Vec<Rat>> = vec![Vec::with_capacity(ks.len() + 1); n];
    for s in 0..n {
        rhs[s].push(Rat::from_integer(powers[n][s].clone()));
    }
    for &mask in &combos {
        for (s, row) in rhs.iter_mut().enumerate() {
            row.push(if s as u64 == mask { Rat::one() } else { Rat::zero() });
        }
    }
    let sol = solve_rat(m, rhs);
    let mut min_poly: Poly = (0..n).map(|j| -sol[j][0].clone()).collect();
    min_poly.push(Rat::one());
    let mut sqrts = Vec::new();
    for (idx, &k) in ks.iter().enumerate() {
        let mask = combos[idx];
        let mut prod = BigInt::one();
        for (i, bi) in b.iter().enumerate() {
            if mask & (1 << i) != 0 {
                prod *= bi;
            }
        }
        // sqrt(k) = e_S * sqrt(k * prod b_S) / prod b_S
        let t = isqrt_exact(&(&prod * BigInt::from(k))).expect("dependent radicand not a square multiple");
        let factor = Rat::new(t, prod);
        let mut coords: Poly = (0..n).map(|j| &sol[j][idx + 1] * &factor).collect();
        poly::trim(&mut coords);
        sqrts.push((k, coords));
    }
    // conjugates of theta differ by at least 2 sqrt(min b_i) >= 2, so a unit interval
    // around the float value isolates it
    let theta0: f64 = basis.iter().map(|&x| (x as f64).sqrt()).sum();
    let k = 52u32;
    let scale = (1u64 << k) as f64;
    let lo_i = BigInt::from(((theta0 - 0.5) * scale).floor() as i128);
    let hi_i = BigInt::from(((theta0 + 0.5) * scale).ceil() as i128);
    let int_poly = clear_denominators(&min_poly);
    let s_lo = sign_dyadic(&int_poly, &lo_i, k);
    let s_hi = sign_dyadic(&int_poly, &hi_i, k);
    if s_lo == 0 || s_hi == 0 || s_lo == s_hi {
        return Err(AlgebraError::NoSignChange);
    }
    let start = Dyadic { lo: lo_i, hi: hi_i, k };
    let refined = refine_to(&int_poly, s_lo, &start, STORED_BITS);
    Ok(Arc::new(NumberField {
        min_poly,
        int_poly,
        root_interval: start.to_rats(),
        refined,
        sign_lo: s_lo,
        irreducible: Irreducibility::Proven,
        sqrts,
        basis,
    }))
}

/// Common denominator of a list of rationals.
pub fn lcm_denominators<'a>(xs: impl IntoIterator<Item = &'a Rat>) -> BigInt {
    xs.into_iter().fold(BigInt::one(), |acc, x| acc.lcm(x.denom()))
}
