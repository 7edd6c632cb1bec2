//! Exact Gaussian elimination over the rationals or a number field.

use num_traits::{One, Signed, Zero};

use super::field::{FieldElement, FieldRef};
use super::poly::Rat;

/// Just enough field structure for elimination.
pub trait Scalar: Clone {
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn is_zero_s(&self) -> bool;
    fn add_s(&self, o: &Self) -> Self;
    fn sub_s(&self, o: &Self) -> Self;
    fn mul_s(&self, o: &Self) -> Self;
    /// Caller guarantees `o` is nonzero.
    fn div_s(&self, o: &Self) -> Self;
    fn neg_s(&self) -> Self;
    fn approx(&self) -> f64;
}

impl Scalar for Rat {
    fn zero_like(&self) -> Self {
        Rat::zero()
    }
    fn one_like(&self) -> Self {
        Rat::one()
    }
    fn is_zero_s(&self) -> bool {
        self.is_zero()
    }
    fn add_s(&self, o: &Self) -> Self {
        self + o
    }
    fn sub_s(&self, o: &Self) -> Self {
        self - o
    }
    fn mul_s(&self, o: &Self) -> Self {
        self * o
    }
    fn div_s(&self, o: &Self) -> Self {
        self / o
    }
    fn neg_s(&self) -> Self {
        -self
    }
    fn approx(&self) -> f64 {
        super::field::rat_to_f64(self)
    }
}

impl Scalar for FieldElement {
    fn zero_like(&self) -> Self {
        FieldElement::zero(self.field())
    }
    fn one_like(&self) -> Self {
        FieldElement::one(self.field())
    }
    fn is_zero_s(&self) -> bool {
        self.is_zero()
    }
    fn add_s(&self, o: &Self) -> Self {
        self + o
    }
    fn sub_s(&self, o: &Self) -> Self {
        self - o
    }
    fn mul_s(&self, o: &Self) -> Self {
        self * o
    }
    fn div_s(&self, o: &Self) -> Self {
        self.try_div(o).expect("division by exact zero")
    }
    fn neg_s(&self) -> Self {
        -self
    }
    fn approx(&self) -> f64 {
        self.to_f64()
    }
}

pub type Mat<T> = Vec<Vec<T>>;

/// Reduced row echelon form; returns the pivot columns.
pub fn rref<T: Scalar>(m: &mut Mat<T>) -> Vec<usize> {
    let rows = m.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = m[0].len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let Some(p) = (r..rows).find(|&i| !m[i][c].is_zero_s()) else { continue };
        m.swap(r, p);
        let inv = m[r][c].clone();
        for j in c..cols {
            m[r][j] = m[r][j].div_s(&inv);
        }
        let prow = m[r].clone();
        for i in 0..rows {
            if i != r && !m[i][c].is_zero_s() {
                let f = m[i][c].clone();
                for j in c..cols {
                    if !prow[j].is_zero_s() {
                        m[i][j] = m[i][j].sub_s(&f.mul_s(&prow[j]));
                    }
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    pivots
}

pub fn rank<T: Scalar>(m: &Mat<T>) -> usize {
    let mut a = m.clone();
    rref(&mut a).len()
}

/// Basis of the right kernel {x : M x = 0}, one vector per free column.
pub fn nullspace<T: Scalar>(m: &Mat<T>, cols: usize, proto: &T) -> Vec<Vec<T>> {
    let mut a = m.clone();
    let piv = rref(&mut a);
    let mut out = Vec::new();
    for free in 0..cols {
        if piv.contains(&free) {
            continue;
        }
        let mut v = vec![proto.zero_like(); cols];
        v[free] = proto.one_like();
        for (r, &pc) in piv.iter().enumerate() {
            v[pc] = a[r][free].neg_s();
        }
        out.push(v);
    }
    out
}

pub fn transpose<T: Clone>(m: &Mat<T>) -> Mat<T> {
    if m.is_empty() {
        return Vec::new();
    }
    (0..m[0].len()).map(|j| m.iter().map(|row| row[j].clone()).collect()).collect()
}

pub fn matmul<T: Scalar>(a: &Mat<T>, b: &Mat<T>) -> Mat<T> {
    let n = b.first().map_or(0, |r| r.len());
    a.iter()
        .map(|row| {
            (0..n)
                .map(|j| {
                    let mut acc = row[0].zero_like();
                    for (k, x) in row.iter().enumerate() {
                        if !x.is_zero_s() && !b[k][j].is_zero_s() {
                            acc = acc.add_s(&x.mul_s(&b[k][j]));
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn matvec<T: Scalar>(a: &Mat<T>, x: &[T]) -> Vec<T> {
    a.iter()
        .map(|row| {
            let mut acc = x[0].zero_like();
            for (p, q) in row.iter().zip(x) {
                if !p.is_zero_s() && !q.is_zero_s() {
                    acc = acc.add_s(&p.mul_s(q));
                }
            }
            acc
        })
        .collect()
}

/// Inverse of a square matrix, `None` if singular.
pub fn inverse<T: Scalar>(m: &Mat<T>) -> Option<Mat<T>> {
    let n = m.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let proto = m[0][0].clone();
    let mut aug: Mat<T> = m
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            for j in 0..n {
                r.push(if i == j { proto.one_like() } else { proto.zero_like() });
            }
            r
        })
        .collect();
    let piv = rref(&mut aug);
    if piv.len() < n || piv[n - 1] != n - 1 {
        return None;
    }
    Some(aug.into_iter().map(|r| r[n..].to_vec()).collect())
}

pub fn det<T: Scalar>(m: &Mat<T>) -> T {
    let n = m.len();
    let mut a = m.clone();
    let mut d = a[0][0].one_like();
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| !a[i][c].is_zero_s()) else { return d.zero_like() };
        if p != c {
            a.swap(p, c);
            d = d.neg_s();
        }
        d = d.mul_s(&a[c][c]);
        let prow = a[c].clone();
        for i in c + 1..n {
            if !a[i][c].is_zero_s() {
                let f = a[i][c].div_s(&prow[c]);
                for j in c..n {
                    a[i][j] = a[i][j].sub_s(&f.mul_s(&prow[j]));
                }
            }
        }
    }
    d
}

/// Solve M x = b for one particular solution, `None` if inconsistent.
pub fn solve<T: Scalar>(m: &Mat<T>, b: &[T]) -> Option<Vec<T>> {
    let rows = m.len();
    let cols = m.first().map_or(0, |r| r.len());
    let mut aug: Mat<T> = m.iter().zip(b).map(|(r, x)| {
        let mut r = r.clone();
        r.push(x.clone());
        r
    }).collect();
    let piv = rref(&mut aug);
    if piv.contains(&cols) {
        return None;
    }
    let proto = b.first()?.clone();
    let mut x = vec![proto.zero_like(); cols];
    for (r, &pc) in piv.iter().enumerate() {
        if r < rows {
            x[pc] = aug[r][cols].clone();
        }
    }
    Some(x)
}

/// Rank over the reals of a matrix of field elements, computed exactly.
pub fn exact_rank(m: &Mat<FieldElement>) -> usize {
    if m.is_empty() || m[0].is_empty() {
        return 0;
    }
    rank(m)
}

pub fn fe_matrix_from_rat(field: &FieldRef, m: &Mat<Rat>) -> Mat<FieldElement> {
    m.iter().map(|r| r.iter().map(|x| FieldElement::from_rat(field, x.clone())).collect()).collect()
}

pub fn approx_matrix<T: Scalar>(m: &Mat<T>) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.iter().map(|x| x.approx()).collect()).collect()
}

/// Rank of a float matrix by partial-pivot elimination with a relative tolerance.
pub fn numeric_rank(m: &[Vec<f64>], tol: f64) -> usize {
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let rows = a.len();
    if rows == 0 {
        return 0;
    }
    let cols = a[0].len();
    let scale = a.iter().flatten().fold(0.0f64, |s, x| s.max(x.abs())).max(1e-300);
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (p, best) = (r..rows).map(|i| (i, a[i][c].abs())).fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= tol * scale {
            continue;
        }
        a.swap(r, p);
        for i in r + 1..rows {
            let f = a[i][c] / a[r][c];
            for j in c..cols {
                a[i][j] -= f * a[r][j];
            }
        }
        r += 1;
    }
    r
}

pub fn rat_is_integer_matrix(m: &Mat<Rat>) -> bool {
    m.iter().flatten().all(|x| x.is_integer())
}

pub fn rat_abs_max(v: &[Rat]) -> Rat {
    v.iter().fold(Rat::zero(), |a, x| if x.abs() > a { x.abs() } else { a })
}
