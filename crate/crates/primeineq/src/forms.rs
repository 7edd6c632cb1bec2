//! Hypothesis checks on linear systems and the reduction to a purely irrational map.
//!
//! Everything structural (ranks, kernels, lattices, witnesses) is decided exactly over
//! the number field; only the shift v and the window live in floating point.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde_json::{json, Value};

use crate::algebraic::field::{lcm_denominators, rat_to_f64, FieldElement, FieldRef};
use crate::algebraic::intmat::{self, IMat};
use crate::algebraic::linalg::{self, Mat, Scalar};
use crate::algebraic::parse::parse_matrix;
use crate::algebraic::poly::Rat;
use crate::algebraic::AlgebraError;
use crate::arith::{SeqFn, Window};
use crate::counter::{self, CountError, CountOptions};
use crate::geom::Polytope;

#[derive(Debug, thiserror::Error)]
pub enum FormsError {
    #[error("L has rank {rank}, expected {m}")]
    RankDeficient { rank: usize, m: usize },
    #[error("need d >= {need}, got d = {d}")]
    TooFewVariables { d: usize, need: usize },
    #[error("v has length {got}, expected {m}")]
    ShiftLength { got: usize, m: usize },
    #[error("epsilon must be nonnegative, got {0}")]
    Epsilon(f64),
    #[error("the minor criterion needs d = m + 2")]
    NotCodimensionTwo,
    #[error("forms {0} and {1} are parallel (infinite Cauchy-Schwarz complexity)")]
    Parallel(usize, usize),
    #[error("matrix is singular")]
    Singular,
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// The data L, v, epsilon, N of a counting problem.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub m: usize,
    pub d: usize,
    pub l: Mat<FieldElement>,
    pub field: FieldRef,
    pub v: Vec<f64>,
    pub epsilon: f64,
    pub n: u64,
}

impl LinearSystem {
    pub fn new(field: FieldRef, l: Mat<FieldElement>, v: Vec<f64>, epsilon: f64, n: u64) -> Result<Self, FormsError> {
        let m = l.len();
        let d = l.first().map_or(0, |r| r.len());
        if d < m {
            return Err(FormsError::TooFewVariables { d, need: m });
        }
        let rank = linalg::exact_rank(&l);
        if rank != m || m == 0 {
            return Err(FormsError::RankDeficient { rank, m });
        }
        if v.len() != m {
            return Err(FormsError::ShiftLength { got: v.len(), m });
        }
        if !(epsilon >= 0.0) {
            return Err(FormsError::Epsilon(epsilon));
        }
        Ok(LinearSystem { m, d, l, field, v, epsilon, n })
    }

    /// Parse the rows of L from scalar strings.
    pub fn parse(rows: &[Vec<String>], v: Vec<f64>, epsilon: f64, n: u64) -> Result<Self, FormsError> {
        let (field, l) = parse_matrix(rows)?;
        Self::new(field, l, v, epsilon, n)
    }

    /// Homogeneous system with v = 0; used when only L matters.
    pub fn from_matrix(rows: &[Vec<&str>]) -> Result<Self, FormsError> {
        let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect();
        let m = rows.len();
        Self::parse(&rows, vec![0.0; m], 1.0, 1)
    }

    pub fn l_f64(&self) -> Vec<Vec<f64>> {
        linalg::approx_matrix(&self.l)
    }

    /// Whether ||v||_inf <= c N.
    pub fn shift_within(&self, c: f64) -> bool {
        self.v.iter().all(|x| x.abs() <= c * self.n as f64)
    }

    /// Human-readable warnings for systems the prediction theorems do not cover.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.d < self.m + 2 {
            w.push(format!("d = {} < m + 2 = {}; predictions are not covered", self.d, self.m + 2));
        }
        w
    }
}

fn columns(l: &Mat<FieldElement>, keep: &[usize]) -> Mat<FieldElement> {
    l.iter().map(|r| keep.iter().map(|&j| r[j].clone()).collect()).collect()
}

fn dot(a: &[FieldElement], b: &[FieldElement]) -> FieldElement {
    let mut s = a[0].zero_like();
    for (x, y) in a.iter().zip(b) {
        if !x.is_zero() && !y.is_zero() {
            s = &s + &(x * y);
        }
    }
    s
}

fn int_to_fe(field: &FieldRef, x: &BigInt) -> FieldElement {
    FieldElement::from_rat(field, Rat::from_integer(x.clone()))
}

/// Row-space vector beta^T L with at most two nonzero coordinates, if one exists.
#[derive(Clone, Debug)]
pub struct DegeneracyWitness {
    pub pair: (usize, usize),
    pub beta: Vec<FieldElement>,
    pub vector: Vec<FieldElement>,
}

/// Membership of L in the dual degeneracy variety, with a witness.
pub fn is_dual_degenerate(sys: &LinearSystem) -> Result<Option<DegeneracyWitness>, FormsError> {
    let (m, d) = (sys.m, sys.d);
    if d < m + 2 {
        return Err(FormsError::TooFewVariables { d, need: m + 2 });
    }
    for i in 0..d {
        for j in i + 1..d {
            let rest: Vec<usize> = (0..d).filter(|&k| k != i && k != j).collect();
            let sub = columns(&sys.l, &rest);
            if linalg::rank(&sub) < m {
                // beta in the left kernel of the column-deleted matrix
                let beta = linalg::nullspace(&linalg::transpose(&sub), m, &sys.l[0][0])
                    .into_iter()
                    .next()
                    .expect("rank drop gives a kernel vector");
                let lt = linalg::transpose(&sys.l);
                let vector = lt.iter().map(|col| dot(&beta, col)).collect();
                return Ok(Some(DegeneracyWitness { pair: (i, j), beta, vector }));
            }
        }
    }
    Ok(None)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    go(0, n, k, &mut cur, &mut out);
    out
}

/// All m-by-m minors exactly nonzero; only defined for d = m + 2.
pub fn minor_criterion(sys: &LinearSystem) -> Result<bool, FormsError> {
    if sys.d != sys.m + 2 {
        return Err(FormsError::NotCodimensionTwo);
    }
    Ok(combinations(sys.d, sys.m).iter().all(|c| !linalg::det(&columns(&sys.l, c)).is_zero()))
}

/// Rational dimension u and a rational map: Theta (u x m, field entries) with Theta L
/// an integer matrix mapping Z^d onto Z^u.
#[derive(Clone, Debug)]
pub struct RationalMap {
    pub u: usize,
    pub theta: Mat<FieldElement>,
    pub theta_l: IMat,
}

/// u = dim {beta : beta^T L in Q^d}.
///
/// The rational vectors of the row space are those orthogonal to every power-basis
/// coordinate of a kernel basis, so the integer points form a saturated lattice that
/// the column HNF extracts directly.
pub fn rational_map(field: &FieldRef, l: &Mat<FieldElement>) -> RationalMap {
    let m = l.len();
    let d = l.first().map_or(0, |r| r.len());
    if m == 0 {
        return RationalMap { u: 0, theta: Vec::new(), theta_l: Vec::new() };
    }
    let proto = FieldElement::zero(field);
    let ker = linalg::nullspace(l, d, &proto);
    let deg = field.degree();
    let mut coord_rows: Vec<Vec<Rat>> = Vec::new();
    for k in &ker {
        let cs: Vec<Vec<Rat>> = k.iter().map(|x| x.coords()).collect();
        for c in 0..deg {
            coord_rows.push(cs.iter().map(|v| v[c].clone()).collect());
        }
    }
    // integer kernel of the coordinate system = integer points of the rational row space
    let lattice: IMat = if coord_rows.is_empty() {
        intmat::identity(d)
    } else {
        let ints: IMat = coord_rows
            .iter()
            .map(|r| {
                let den = lcm_denominators(r.iter());
                r.iter().map(|x| (x * Rat::from_integer(den.clone())).to_integer()).collect()
            })
            .collect();
        let (h, u) = intmat::hnf(&ints);
        let r = intmat::hnf_rank(&h);
        u.iter().map(|row| row[r..].to_vec()).collect()
    };
    let u_dim = lattice.first().map_or(0, |r| r.len());
    if u_dim == 0 {
        return RationalMap { u: 0, theta: Vec::new(), theta_l: Vec::new() };
    }
    // canonical basis: column HNF of the d x u basis matrix
    let (basis, _) = intmat::hnf(&lattice);
    let theta_l: IMat = (0..u_dim).map(|k| (0..d).map(|i| basis[i][k].clone()).collect()).collect();
    let lt = linalg::transpose(l);
    let theta = theta_l
        .iter()
        .map(|q| {
            let rhs: Vec<FieldElement> = q.iter().map(|x| int_to_fe(field, x)).collect();
            linalg::solve(&lt, &rhs).expect("rational row lies in the row space")
        })
        .collect();
    RationalMap { u: u_dim, theta, theta_l }
}

/// (u, Theta) of the system.
pub fn rational_dimension(sys: &LinearSystem) -> RationalMap {
    rational_map(&sys.field, &sys.l)
}

/// y -> G(c + M y): the window seen by the reduced variables.
#[derive(Clone, Debug)]
pub struct AffineWindow {
    pub base: Window,
    pub offset: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
    /// exact `matrix`, when known, for sharp boundary decisions
    pub matrix_exact: Option<Mat<FieldElement>>,
}

impl AffineWindow {
    pub fn eval(&self, y: &[f64]) -> f64 {
        let z: Vec<f64> = self
            .offset
            .iter()
            .zip(&self.matrix)
            .map(|(c, row)| c + row.iter().zip(y).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        self.base.eval(&z)
    }
    pub fn dim(&self) -> usize {
        self.matrix.first().map_or(0, |r| r.len())
    }
}

/// One admissible residue shift.
#[derive(Clone, Debug)]
pub struct Shift {
    /// r in Z^u, the value of Theta L on the class
    pub r: Vec<i64>,
    /// r_tilde = sum r_i x_i in Z^d
    pub r_tilde: Vec<i64>,
    /// an integer point n with Theta L n = r and G(Ln + v) != 0 was found
    pub verified: bool,
}

/// Output of the reduction to a purely irrational map.
#[derive(Clone, Debug)]
pub struct RationalReduction {
    pub u: usize,
    pub theta: Mat<FieldElement>,
    pub theta_l: IMat,
    pub xi: IMat,
    pub x_basis: Vec<Vec<BigInt>>,
    pub p: Mat<FieldElement>,
    pub q: Mat<FieldElement>,
    pub l_prime: Mat<FieldElement>,
    pub v_prime: Vec<f64>,
    /// pi_u Q v, the rational-part coordinates of v
    pub v_rational: Vec<f64>,
    pub shifts: Vec<Shift>,
    pub collapsed: bool,
    pub minimiser: Vec<i64>,
    pub minimiser_tie: bool,
    pub unimodular: bool,
    pub xi_saturated: bool,
    pub l_prime_irrational: bool,
}

/// Search limits for the shift enumeration.
#[derive(Clone, Copy, Debug)]
pub struct ShiftSearch {
    pub max_candidates: usize,
    pub max_box: i64,
    pub cap: usize,
}

impl Default for ShiftSearch {
    fn default() -> Self {
        ShiftSearch { max_candidates: 100_000, max_box: 1 << 12, cap: 200_000 }
    }
}

fn imat_f64(a: &IMat) -> Vec<Vec<f64>> {
    a.iter().map(|r| r.iter().map(|x| x.to_f64().unwrap()).collect()).collect()
}

fn fe_matvec_f64(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

impl RationalReduction {
    pub fn r_tilde(&self) -> Vec<Vec<i64>> {
        self.shifts.iter().map(|s| s.r_tilde.clone()).collect()
    }

    /// G_r(y) = G(P_K y + L r_tilde + v - P_K v'), so that G_r(L' k + v') = G(L (Xi k + r_tilde) + v).
    pub fn window_for(&self, sys: &LinearSystem, g: &Window, r_tilde: &[i64]) -> AffineWindow {
        let pf = linalg::approx_matrix(&self.p);
        let lf = sys.l_f64();
        let (m, u) = (sys.m, self.u);
        let matrix: Vec<Vec<f64>> = pf.iter().map(|row| row[u..].to_vec()).collect();
        let offset: Vec<f64> = (0..m)
            .map(|i| {
                let lr: f64 = lf[i].iter().zip(r_tilde).map(|(a, &x)| a * x as f64).sum();
                let pv: f64 = matrix[i].iter().zip(&self.v_prime).map(|(a, b)| a * b).sum();
                lr + sys.v[i] - pv
            })
            .collect();
        let matrix_exact = Some(self.p.iter().map(|row| row[u..].to_vec()).collect());
        AffineWindow { base: g.clone(), offset, matrix, matrix_exact }
    }

    /// Audit document: integer data verbatim, field data as coordinates plus a decimal.
    pub fn to_json(&self) -> Value {
        let fe = |x: &FieldElement| json!({"coords": x.coord_strings(), "approx": x.to_f64()});
        let fm = |m: &Mat<FieldElement>| Value::Array(m.iter().map(|r| Value::Array(r.iter().map(fe).collect())).collect());
        let im = |m: &IMat| Value::Array(m.iter().map(|r| Value::Array(r.iter().map(|x| json!(x.to_string())).collect())).collect());
        json!({
            "u": self.u,
            "theta": fm(&self.theta),
            "theta_l": im(&self.theta_l),
            "xi": im(&self.xi),
            "x_basis": im(&self.x_basis),
            "q": fm(&self.q),
            "l_prime": fm(&self.l_prime),
            "v_prime": self.v_prime,
            "r_tilde": self.shifts.iter().map(|s| json!({"r": s.r, "r_tilde": s.r_tilde, "verified": s.verified})).collect::<Vec<_>>(),
            "collapsed": self.collapsed,
            "minimiser": self.minimiser,
            "minimiser_tie": self.minimiser_tie,
            "checks": {"unimodular": self.unimodular, "xi_saturated": self.xi_saturated, "l_prime_irrational": self.l_prime_irrational},
        })
    }
}

/// Reduce L to a purely irrational map on the kernel lattice of Theta L.
///
/// `radius` is the sup-norm radius of the support of G; shifts are those classes
/// r in Z^u = Theta L (Z^d) meeting {n : G(Ln + v) != 0}.
pub fn rational_reduction(sys: &LinearSystem, radius: f64, search: ShiftSearch) -> RationalReduction {
    let (m, d) = (sys.m, sys.d);
    let field = &sys.field;
    let rm = rational_dimension(sys);
    let u = rm.u;
    let zero = FieldElement::zero(field);

    // A U = [H | 0] with H = I because Theta L is onto Z^u
    let (xi, x_basis, unimodular) = if u == 0 {
        (intmat::identity(d), Vec::new(), true)
    } else {
        let (h, uu) = intmat::hnf(&rm.theta_l);
        debug_assert!((0..u).all(|i| (0..u).all(|j| h[i][j] == if i == j { BigInt::one() } else { BigInt::zero() })));
        let xi: IMat = uu.iter().map(|row| row[u..].to_vec()).collect();
        let xb: Vec<Vec<BigInt>> = (0..u).map(|k| (0..d).map(|i| uu[i][k].clone()).collect()).collect();
        (xi, xb, intmat::is_unimodular(&uu))
    };
    let xi_saturated = intmat::snf_diagonal(&xi).iter().all(|x| x.is_one())
        && intmat::mul(&rm.theta_l, &xi).iter().flatten().all(|x| x.is_zero());

    // P = [L x_1 .. L x_u | basis of ker Theta], Q = P^{-1}
    let mut pcols: Vec<Vec<FieldElement>> = x_basis
        .iter()
        .map(|x| sys.l.iter().map(|row| dot(row, &x.iter().map(|c| int_to_fe(field, c)).collect::<Vec<_>>())).collect())
        .collect();
    if u == 0 {
        pcols.extend((0..m).map(|k| (0..m).map(|i| if i == k { FieldElement::one(field) } else { zero.clone() }).collect()));
    } else {
        pcols.extend(linalg::nullspace(&rm.theta, m, &zero));
    }
    let p: Mat<FieldElement> = (0..m).map(|i| pcols.iter().map(|c| c[i].clone()).collect()).collect();
    let q = linalg::inverse(&p).expect("span(L x_i) and ker Theta are complementary");

    let xi_fe: Mat<FieldElement> = xi.iter().map(|r| r.iter().map(|x| int_to_fe(field, x)).collect()).collect();
    let qlxi = linalg::matmul(&linalg::matmul(&q, &sys.l), &xi_fe);
    let l_prime: Mat<FieldElement> = qlxi[u..].to_vec();
    let qf = linalg::approx_matrix(&q);
    let qv = fe_matvec_f64(&qf, &sys.v);
    let v_prime = qv[u..].to_vec();
    let v_rational = qv[..u].to_vec();
    let l_prime_irrational = l_prime.is_empty() || rational_map(field, &l_prime).u == 0;

    // minimiser of ||r + Theta v|| over Z^u
    let mut minimiser_tie = false;
    let minimiser: Vec<i64> = v_rational
        .iter()
        .map(|&t| {
            let x = -t;
            if ((x - x.floor()) - 0.5).abs() < 1e-9 {
                minimiser_tie = true;
                x.floor() as i64
            } else {
                x.round() as i64
            }
        })
        .collect();

    let shifts = enumerate_shifts(sys, &rm, &xi, &x_basis, &p, &v_rational, radius, search);
    let collapsed = shifts.len() <= 1;
    RationalReduction {
        u,
        theta: rm.theta,
        theta_l: rm.theta_l,
        xi,
        x_basis,
        p,
        q,
        l_prime,
        v_prime,
        v_rational,
        shifts,
        collapsed,
        minimiser,
        minimiser_tie,
        unimodular,
        xi_saturated,
        l_prime_irrational,
    }
}

#[allow(clippy::too_many_arguments)]
fn enumerate_shifts(
    sys: &LinearSystem,
    rm: &RationalMap,
    xi: &IMat,
    x_basis: &[Vec<BigInt>],
    p: &Mat<FieldElement>,
    v_rational: &[f64],
    radius: f64,
    search: ShiftSearch,
) -> Vec<Shift> {
    let (m, d, u) = (sys.m, sys.d, rm.u);
    let lf = sys.l_f64();
    let pf = linalg::approx_matrix(p);
    let xif = imat_f64(xi);
    let lxi: Vec<Vec<f64>> = lf.iter().map(|row| (0..d - u).map(|k| (0..d).map(|j| row[j] * xif[j][k]).sum()).collect()).collect();
    let xb: Vec<Vec<i64>> = x_basis.iter().map(|x| x.iter().map(|c| c.to_i64().unwrap()).collect()).collect();

    // a box for r from |Theta z| with z in the support cube
    let thf = linalg::approx_matrix(&rm.theta);
    let ranges: Vec<(i64, i64)> = (0..u)
        .map(|k| {
            let w = radius * thf[k].iter().map(|x| x.abs()).sum::<f64>();
            let c = -v_rational[k];
            ((c - w - 1e-9).ceil() as i64, (c + w + 1e-9).floor() as i64)
        })
        .collect();
    let mut candidates: Vec<Vec<i64>> = vec![Vec::new()];
    for &(lo, hi) in &ranges {
        let mut next = Vec::new();
        for c in &candidates {
            for x in lo..=hi {
                let mut c2 = c.clone();
                c2.push(x);
                next.push(c2);
            }
        }
        candidates = next;
        assert!(candidates.len() <= search.max_candidates, "too many residue classes; shrink the window");
    }

    let mut out = Vec::new();
    for r in candidates {
        let r_tilde: Vec<i64> = (0..d).map(|j| (0..u).map(|k| r[k] * xb[k][j]).sum()).collect();
        // real feasibility: z = P_x (r + Theta v) + P_K y inside the cube
        let z0: Vec<f64> = (0..m).map(|i| (0..u).map(|k| pf[i][k] * (r[k] as f64 + v_rational[k])).sum()).collect();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for i in 0..m {
            let row: Vec<f64> = pf[i][u..].to_vec();
            a.push(row.clone());
            b.push(radius - z0[i]);
            a.push(row.iter().map(|x| -x).collect());
            b.push(radius + z0[i]);
        }
        if u < m && !Polytope::new(&a, &b).is_feasible() {
            continue;
        }
        if u == m && z0.iter().any(|z| z.abs() > radius) {
            continue;
        }
        // integer witness: k with |L (r_tilde + Xi k) + v| < radius
        let base: Vec<f64> = (0..m).map(|i| (0..d).map(|j| lf[i][j] * r_tilde[j] as f64).sum::<f64>() + sys.v[i]).collect();
        let inside = |k: &[i64]| {
            (0..m).all(|i| (base[i] + lxi[i].iter().zip(k).map(|(a, &x)| a * x as f64).sum::<f64>()).abs() <= radius * (1.0 + 1e-12))
        };
        let mut verified = false;
        let mut bsize = 1i64;
        let dim = d - u;
        while bsize <= search.max_box {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for i in 0..m {
                a.push(lxi[i].clone());
                b.push(radius - base[i]);
                a.push(lxi[i].iter().map(|x| -x).collect());
                b.push(radius + base[i]);
            }
            for j in 0..dim {
                let mut e = vec![0.0; dim];
                e[j] = 1.0;
                a.push(e.clone());
                b.push(bsize as f64);
                e[j] = -1.0;
                a.push(e);
                b.push(bsize as f64);
            }
            match Polytope::new(&a, &b).find(search.cap, |k| inside(k)) {
                Ok(Some(_)) => {
                    verified = true;
                    break;
                }
                Ok(None) => bsize *= 2,
                Err(()) => break,
            }
        }
        out.push(Shift { r, r_tilde, verified });
    }
    out
}

/// Both sides of T^{L,v}(f) = sum over shifts of T^{L',v',Xi,r}(f), evaluated by direct summation.
pub fn decomposition_check(
    sys: &LinearSystem,
    red: &RationalReduction,
    fs: &[&SeqFn],
    f: &Window,
    g: &Window,
    n: u64,
    opts: CountOptions,
) -> Result<(f64, f64, f64), CountError> {
    let lhs = counter::t_discrete(fs, f, g, &sys.l, &sys.v, n, opts)?;
    let mut rhs = 0.0;
    for s in &red.shifts {
        let gr = red.window_for(sys, g, &s.r_tilde);
        rhs += counter::t_general(fs, f, &gr, &red.l_prime, &red.v_prime, &red.xi, &s.r_tilde, n, opts)?;
    }
    Ok((lhs, rhs, (lhs - rhs).abs()))
}

/// Linear forms psi_1..psi_t on R^h.
#[derive(Clone, Debug)]
pub struct FormSystem {
    pub h: usize,
    pub psi: Mat<FieldElement>,
}

impl FormSystem {
    pub fn new(psi: Mat<FieldElement>) -> Self {
        let h = psi.first().map_or(0, |r| r.len());
        assert!(psi.iter().all(|r| r.len() == h), "forms of unequal dimension");
        FormSystem { h, psi }
    }
    pub fn from_i64(rows: &[Vec<i64>]) -> Self {
        let q = crate::algebraic::NumberField::rationals();
        Self::new(rows.iter().map(|r| r.iter().map(|&x| FieldElement::from_int(&q, x)).collect()).collect())
    }
    pub fn parse(rows: &[Vec<String>]) -> Result<Self, FormsError> {
        let (_, m) = parse_matrix(rows)?;
        Ok(Self::new(m))
    }
    pub fn t(&self) -> usize {
        self.psi.len()
    }
    /// The coordinate forms xi_1..xi_d of an integer map Xi.
    pub fn from_xi(xi: &IMat) -> Self {
        let q = crate::algebraic::NumberField::rationals();
        Self::new(xi.iter().map(|r| r.iter().map(|x| int_to_fe(&q, x)).collect()).collect())
    }
}

fn parallel(a: &[FieldElement], b: &[FieldElement]) -> bool {
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if !(&(&a[i] * &b[j]) - &(&a[j] * &b[i])).is_zero() {
                return false;
            }
        }
    }
    true
}

/// First parallel pair, if any. A zero form is parallel to everything.
pub fn parallel_pair(psi: &FormSystem) -> Option<(usize, usize)> {
    let t = psi.t();
    (0..t).flat_map(|i| (i + 1..t).map(move |j| (i, j))).find(|&(i, j)| parallel(&psi.psi[i], &psi.psi[j]))
}

/// No two forms parallel.
pub fn is_finite_cs_complexity(psi: &FormSystem) -> bool {
    parallel_pair(psi).is_none()
}

/// A witness set J_i for each form when Psi is in s-normal form.
pub fn normal_form_witnesses(psi: &FormSystem, s: usize) -> Option<Vec<Vec<usize>>> {
    let nz: Vec<Vec<bool>> = psi.psi.iter().map(|r| r.iter().map(|x| !x.is_zero()).collect()).collect();
    let t = psi.t();
    let mut out = Vec::with_capacity(t);
    for i in 0..t {
        let supp: Vec<usize> = (0..psi.h).filter(|&e| nz[i][e]).collect();
        let mut found = None;
        'size: for k in 1..=(s + 1).min(supp.len()) {
            for c in combinations(supp.len(), k) {
                let j: Vec<usize> = c.iter().map(|&x| supp[x]).collect();
                if (0..t).all(|o| o == i || j.iter().any(|&e| !nz[o][e])) {
                    found = Some(j);
                    break 'size;
                }
            }
        }
        out.push(found?);
    }
    Some(out)
}

pub fn verify_normal_form(psi: &FormSystem, s: usize) -> bool {
    normal_form_witnesses(psi, s).is_some()
}

/// Smallest s for which Psi is in s-normal form, searching s < t.
pub fn normal_form_order(psi: &FormSystem) -> Option<usize> {
    (0..psi.t().max(1)).find(|&s| verify_normal_form(psi, s))
}

#[derive(Clone, Debug)]
pub struct NormalFormExtension {
    pub psi: FormSystem,
    pub s: usize,
    pub d_prime: usize,
    /// directions f_1..f_k in R^h
    pub f: Mat<FieldElement>,
}

/// Scale a vector with rational entries to a primitive integer vector, sign fixed so the
/// first nonzero entry is positive; field vectors are left alone.
fn normalise_direction(v: Vec<FieldElement>) -> Vec<FieldElement> {
    let rats: Option<Vec<Rat>> = v.iter().map(|x| x.as_rational()).collect();
    let Some(rats) = rats else { return v };
    let field = v[0].field().clone();
    let den = lcm_denominators(rats.iter());
    let ints: Vec<BigInt> = rats.iter().map(|x| (x * Rat::from_integer(den.clone())).to_integer()).collect();
    let g = ints.iter().fold(BigInt::zero(), |g, x| g.gcd(x));
    let sign = if ints.iter().find(|x| !x.is_zero()).is_some_and(|x| x.is_negative()) { -BigInt::one() } else { BigInt::one() };
    ints.iter().map(|x| int_to_fe(&field, &(x / &g * &sign))).collect()
}

/// Extend Psi to normal form by Psi'(u, x) = Psi(u + x_1 f_1 + ... + x_k f_k).
///
/// For each form the others are split greedily into classes whose span misses it; a
/// class contributes a direction on which the class vanishes and the form does not.
pub fn normal_form_extension(psi: &FormSystem) -> Result<NormalFormExtension, FormsError> {
    if let Some((i, j)) = parallel_pair(psi) {
        return Err(FormsError::Parallel(i, j));
    }
    if let Some(s) = normal_form_order(psi) {
        return Ok(NormalFormExtension { psi: psi.clone(), s, d_prime: psi.h, f: Vec::new() });
    }
    let t = psi.t();
    let h = psi.h;
    let proto = psi.psi[0][0].clone();
    let mut dirs: Vec<Vec<FieldElement>> = Vec::new();
    for i in 0..t {
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for o in (0..t).filter(|&o| o != i) {
            let fits = |c: &Vec<usize>| {
                let mut rows: Mat<FieldElement> = c.iter().map(|&k| psi.psi[k].clone()).collect();
                rows.push(psi.psi[o].clone());
                let r = linalg::rank(&rows);
                rows.push(psi.psi[i].clone());
                linalg::rank(&rows) > r
            };
            match classes.iter_mut().find(|c| fits(c)) {
                Some(c) => c.push(o),
                None => classes.push(vec![o]),
            }
        }
        for c in &classes {
            let vanish = |f: &Vec<FieldElement>| c.iter().all(|&k| dot(&psi.psi[k], f).is_zero()) && !dot(&psi.psi[i], f).is_zero();
            if dirs.iter().any(vanish) {
                continue;
            }
            let rows: Mat<FieldElement> = c.iter().map(|&k| psi.psi[k].clone()).collect();
            let ker = linalg::nullspace(&rows, h, &proto);
            let f = ker
                .into_iter()
                .map(normalise_direction)
                .find(|f| !dot(&psi.psi[i], f).is_zero())
                .or_else(|| {
                    // no single basis vector works; a generic combination of the kernel does
                    let ker = linalg::nullspace(&rows, h, &proto);
                    (1..=ker.len() as i64 + 1).find_map(|a| {
                        let mut f = vec![proto.zero_like(); h];
                        for (k, b) in ker.iter().enumerate() {
                            let w = FieldElement::from_int(proto.field(), a.pow(k as u32));
                            for x in 0..h {
                                f[x] = &f[x] + &(&w * &b[x]);
                            }
                        }
                        (!dot(&psi.psi[i], &f).is_zero()).then(|| normalise_direction(f))
                    })
                })
                .expect("class span misses psi_i, so its kernel does not lie in ker psi_i");
            dirs.push(f);
        }
    }
    let ext: Mat<FieldElement> = psi
        .psi
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.extend(dirs.iter().map(|f| dot(row, f)));
            r
        })
        .collect();
    let out = FormSystem::new(ext);
    let s = normal_form_order(&out).expect("the construction supplies witness sets");
    let d_prime = out.h;
    Ok(NormalFormExtension { psi: out, s, d_prime, f: dirs })
}

/// Basis of the dual lattice: (M^{-1})^T for a basis matrix M with lattice vectors as columns.
pub fn dual_lattice<T: Scalar>(m: &Mat<T>) -> Result<Mat<T>, FormsError> {
    let inv = linalg::inverse(m).ok_or(FormsError::Singular)?;
    Ok(linalg::transpose(&inv))
}

/// Dual lattice over the rationals, from integer or rational entries.
pub fn dual_lattice_rat(m: &Mat<Rat>) -> Result<Mat<Rat>, FormsError> {
    dual_lattice(m)
}

/// Approximate entries of a rational matrix (test and report helper).
pub fn rat_matrix_f64(m: &Mat<Rat>) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.iter().map(rat_to_f64).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebraic::poly::rat;

    fn sys(rows: &[Vec<&str>]) -> LinearSystem {
        LinearSystem::from_matrix(rows).unwrap()
    }

    fn surd() -> LinearSystem {
        sys(&[vec!["1", "0", "sqrt2", "-sqrt3"], vec!["0", "1", "sqrt5", "-sqrt7"]])
    }

    #[test]
    fn degeneracy_examples() {
        let s = sys(&[vec!["1", "-2", "1", "0"], vec!["2", "-4", "0", "sqrt3"]]);
        let w = is_dual_degenerate(&s).unwrap().unwrap();
        let v: Vec<f64> = w.vector.iter().map(|x| x.to_f64()).collect();
        assert_eq!(w.pair, (2, 3));
        assert!(v[0] == 0.0 && v[1] == 0.0);
        // proportional to (0, 0, -2, sqrt3)
        assert!((v[2] * 3f64.sqrt() + 2.0 * v[3]).abs() < 1e-12 && v[2] != 0.0);
        assert!(is_dual_degenerate(&surd()).unwrap().is_none());
        assert!(minor_criterion(&surd()).unwrap());
        assert!(is_dual_degenerate(&sys(&[vec!["1", "1", "1"]])).unwrap().is_none());
        assert!(!minor_criterion(&sys(&[vec!["1", "0", "1", "0"], vec!["0", "1", "0", "1"]])).unwrap());
        assert!(minor_criterion(&sys(&[vec!["1", "-2", "1", "0"], vec!["0", "1", "-2", "1"]])).unwrap());
        assert!(is_dual_degenerate(&sys(&[vec!["1", "1"]])).is_err());
    }

    #[test]
    fn rank_checked() {
        assert!(LinearSystem::from_matrix(&[vec!["1", "sqrt2"], vec!["sqrt2", "2"]]).is_err());
    }

    #[test]
    fn rational_dimensions() {
        let ap = sys(&[vec!["1", "-2", "1", "0"], vec!["0", "1", "-2", "1"]]);
        let r = rational_dimension(&ap);
        assert_eq!(r.u, 2);
        assert_eq!(r.theta_l.len(), 2);
        assert_eq!(rational_dimension(&surd()).u, 0);
        let rem = sys(&[vec!["1", "-2", "1", "0"], vec!["0", "1", "-sqrt3", "1"]]);
        let r = rational_dimension(&rem);
        assert_eq!(r.u, 1);
        // Theta is a multiple of the first coordinate projection
        assert!(r.theta[0][1].is_zero() && !r.theta[0][0].is_zero());
        assert_eq!(r.theta_l, intmat::from_i64(&[vec![1, -2, 1, 0]]));
        // a field-valued Theta: beta sqrt2 rational forces beta in Q / sqrt2
        let s = sys(&[vec!["sqrt2", "sqrt2", "0"], vec!["0", "1", "sqrt3"]]);
        let r = rational_dimension(&s);
        assert_eq!(r.u, 1);
        assert!(r.theta[0][0].as_rational().is_none());
    }

    #[test]
    fn remark_reduction() {
        let rem = sys(&[vec!["1", "-2", "1", "0"], vec!["0", "1", "-sqrt3", "1"]]);
        let red = rational_reduction(&rem, 1.0, ShiftSearch::default());
        assert_eq!(red.u, 1);
        let expect = intmat::from_i64(&[vec![1, 0, 0], vec![1, 1, 0], vec![1, 2, 0], vec![0, 0, 1]]);
        assert!(intmat::same_column_lattice(&red.xi, &expect));
        assert!(red.unimodular && red.xi_saturated && red.l_prime_irrational);
        assert_eq!(red.l_prime.len(), 1);
        // r ranges over |r| <= 1 around Theta v = 0, all attained
        let rs: Vec<Vec<i64>> = red.shifts.iter().map(|s| s.r.clone()).collect();
        assert_eq!(rs, vec![vec![-1], vec![0], vec![1]]);
        assert!(red.shifts.iter().all(|s| s.verified));
        assert_eq!(red.minimiser, vec![0]);
        // a small window collapses to the minimiser
        let red = rational_reduction(&rem, 0.4, ShiftSearch::default());
        assert!(red.collapsed);
        assert_eq!(red.shifts[0].r, red.minimiser);
        let j = red.to_json();
        assert_eq!(j["u"], 1);
    }

    #[test]
    fn trivial_reductions() {
        let red = rational_reduction(&surd(), 1.0, ShiftSearch::default());
        assert_eq!(red.u, 0);
        assert_eq!(red.xi, intmat::identity(4));
        assert_eq!(red.r_tilde(), vec![vec![0; 4]]);
        assert_eq!(red.l_prime, surd().l);
        let ap = sys(&[vec!["1", "-2", "1", "0"], vec!["0", "1", "-2", "1"]]);
        let red = rational_reduction(&ap, 0.5, ShiftSearch::default());
        assert!(red.l_prime.is_empty());
        assert_eq!(red.xi.len(), 4);
        assert_eq!(red.xi[0].len(), 2);
        assert_eq!(red.r_tilde(), vec![vec![0; 4]]);
    }

    #[test]
    fn decomposition_identity() {
        let t = crate::arith::PrimeTable::new(200);
        let lam = SeqFn::lambda_prime(&t, 100);
        let fw = Window::unit_box(4);
        let cases = [
            (vec![vec!["1", "-2", "1", "0"], vec!["0", "1", "-2", "1"]], vec![0.0, 0.0]),
            (vec![vec!["1", "-2", "1", "0"], vec!["0", "1", "-sqrt3", "1"]], vec![0.5, -0.25]),
            (vec![vec!["1", "0", "sqrt2", "-sqrt3"], vec!["0", "1", "sqrt5", "-sqrt7"]], vec![0.0, 0.0]),
        ];
        for (rows, v) in cases {
            let rows: Vec<Vec<String>> = rows.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect();
            let s = LinearSystem::parse(&rows, v, 1.0, 100).unwrap();
            for g in [Window::smooth_cube(2, 1.5, 0.2), Window::cube(2, 1.0)] {
                let red = rational_reduction(&s, g.radius(), ShiftSearch::default());
                let (lhs, rhs, diff) = decomposition_check(&s, &red, &[&lam; 4], &fw, &g, 100, CountOptions::default()).unwrap();
                assert!(lhs > 0.0);
                assert!(diff <= 1e-9 * lhs.abs().max(1.0), "{lhs} {rhs}");
            }
        }
        // one-point supports: a single term on each side
        let s = LinearSystem::from_matrix(&[vec!["1", "-2", "1", "0"], vec!["0", "1", "-sqrt3", "1"]]).unwrap();
        let pts = [3i64, 5, 7, 6];
        let fs: Vec<SeqFn> = pts.iter().map(|&p| SeqFn::from_points(&[(p, 1.0)])).collect();
        let refs: Vec<&SeqFn> = fs.iter().collect();
        let g = Window::cube(2, 4.0);
        let red = rational_reduction(&s, 4.0, ShiftSearch::default());
        let (lhs, rhs, diff) = decomposition_check(&s, &red, &refs, &Window::unit_box(4), &g, 10, CountOptions::default()).unwrap();
        assert_eq!((lhs, diff), (rhs, 0.0));
        assert!(lhs > 0.0);
    }

    #[test]
    fn cs_complexity_and_normal_form() {
        let id = FormSystem::from_i64(&[vec![1, 0], vec![0, 1]]);
        assert!(is_finite_cs_complexity(&id));
        assert!(verify_normal_form(&id, 0));
        assert!(!is_finite_cs_complexity(&FormSystem::from_i64(&[vec![1], vec![2]])));
        let ap4 = FormSystem::from_i64(&[vec![1, 0], vec![1, 1], vec![1, 2], vec![1, 3]]);
        assert!(is_finite_cs_complexity(&ap4));
        assert!(!verify_normal_form(&ap4, 1));
        let ext = normal_form_extension(&ap4).unwrap();
        assert!(verify_normal_form(&ext.psi, ext.s));
        assert_eq!(ext.s, 2);
        assert_eq!(ext.f.len(), 4);
        assert_eq!(ext.d_prime, 6);
        let e = normal_form_extension(&id).unwrap();
        assert_eq!((e.s, e.f.len()), (0, 0));
        let cube = FormSystem::from_i64(&[vec![1, 0, 0], vec![1, 1, 0], vec![1, 0, 1], vec![1, 1, 1]]);
        assert!(!verify_normal_form(&cube, 1));
        let e = normal_form_extension(&cube).unwrap();
        assert!(verify_normal_form(&e.psi, e.s));
        assert!(normal_form_extension(&FormSystem::from_i64(&[vec![1, 1], vec![2, 2]])).is_err());
    }

    #[test]
    fn dual_lattices() {
        let m = |r: &[[i64; 2]; 2]| -> Mat<Rat> { r.iter().map(|row| row.iter().map(|&x| rat(x)).collect()).collect() };
        assert_eq!(dual_lattice_rat(&m(&[[1, 0], [0, 1]])).unwrap(), m(&[[1, 0], [0, 1]]));
        let d = dual_lattice_rat(&m(&[[2, 0], [0, 3]])).unwrap();
        assert_eq!(d[0][0], Rat::new(1.into(), 2.into()));
        assert_eq!(d[1][1], Rat::new(1.into(), 3.into()));
        let d = dual_lattice_rat(&m(&[[1, 1], [0, 2]])).unwrap();
        assert_eq!(linalg::det(&d), Rat::new(1.into(), 2.into()));
        assert!(dual_lattice_rat(&m(&[[1, 2], [2, 4]])).is_err());
    }
}
