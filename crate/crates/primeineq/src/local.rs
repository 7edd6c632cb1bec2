//! Local densities, singular series and the predicted main term Σ_r 𝔖_r J_r.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::algebraic::{IMat, Rat};
use crate::arith::sieve::{is_squarefree, prime_factors};
use crate::arith::{PrimeTable, Window};
use crate::forms::{self, FormSystem, LinearSystem, RationalReduction};
use crate::quad::{self, QuadError, QuadOptions, QuadResult};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LocalError {
    #[error("modulus {0} is not squarefree")]
    NotSquarefree(u64),
    #[error("forms {0} and {1} are parallel, so the singular series need not converge")]
    InfiniteComplexity(usize, usize),
    #[error("P_cut = {p_cut} is below the exceptional prime {prime}: forms degenerate mod {prime}, so the tail model does not apply there")]
    PCutTooSmall { p_cut: u64, prime: u64 },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("residue enumeration of size {size:e} exceeds the budget {budget:e} and the moduli do not factor through max W")]
    Budget { size: f64, budget: f64 },
    #[error(transparent)]
    Quad(#[from] QuadError),
}

fn to_mod(x: &BigInt, p: u64) -> u64 {
    x.mod_floor(&BigInt::from(p)).to_u64().unwrap()
}

/// Rank of the rows mod p, or None when the affine system rows . n + rhs = 0 is inconsistent.
fn affine_rank_mod_p(rows: &[Vec<u64>], rhs: &[u64], p: u64) -> Option<usize> {
    let h = rows.first().map_or(0, |r| r.len());
    let mut a: Vec<Vec<u64>> = rows.iter().zip(rhs).map(|(r, &c)| {
        let mut r = r.clone();
        r.push(c);
        r
    }).collect();
    let pm = |x: u64, y: u64| ((x as u128 * y as u128) % p as u128) as u64;
    let inv = |x: u64| {
        // Fermat, p prime
        let (mut b, mut e, mut acc) = (x % p, p - 2, 1u64);
        while e > 0 {
            if e & 1 == 1 {
                acc = pm(acc, b);
            }
            b = pm(b, b);
            e >>= 1;
        }
        acc
    };
    let mut rank = 0;
    for c in 0..h {
        let Some(piv) = (rank..a.len()).find(|&i| a[i][c] != 0) else { continue };
        a.swap(rank, piv);
        let iv = inv(a[rank][c]);
        for k in c..=h {
            a[rank][k] = pm(a[rank][k], iv);
        }
        for i in 0..a.len() {
            if i != rank && a[i][c] != 0 {
                let f = a[i][c];
                for k in c..=h {
                    a[i][k] = (a[i][k] + p - pm(f, a[rank][k])) % p;
                }
            }
        }
        rank += 1;
    }
    if a[rank..].iter().any(|r| r[h] != 0) {
        None
    } else {
        Some(rank)
    }
}

fn shape(xi: &IMat, r: &[i64]) -> Result<(usize, usize), LocalError> {
    let d = xi.len();
    let h = xi.first().map_or(0, |r| r.len());
    if r.len() != d || xi.iter().any(|row| row.len() != h) {
        return Err(LocalError::Shape("Xi rows and r_tilde".into()));
    }
    Ok((d, h))
}

/// Density of {n in Z^h : e_j | xi_j(n) + r_j for all j}, prime by prime.
pub fn local_factor_alpha(xi: &IMat, e: &[u64], r: &[i64]) -> Result<Rat, LocalError> {
    let (d, _) = shape(xi, r)?;
    if e.len() != d {
        return Err(LocalError::Shape("e".into()));
    }
    if let Some(&bad) = e.iter().find(|&&x| x == 0 || !is_squarefree(x)) {
        return Err(LocalError::NotSquarefree(bad));
    }
    let mut primes: Vec<u64> = e.iter().flat_map(|&x| prime_factors(x)).collect();
    primes.sort_unstable();
    primes.dedup();
    let mut alpha = Rat::one();
    for p in primes {
        let idx: Vec<usize> = (0..d).filter(|&j| e[j].is_multiple_of(p)).collect();
        let rows: Vec<Vec<u64>> = idx.iter().map(|&j| xi[j].iter().map(|x| to_mod(x, p)).collect()).collect();
        let rhs: Vec<u64> = idx.iter().map(|&j| to_mod(&BigInt::from(r[j]), p)).collect();
        match affine_rank_mod_p(&rows, &rhs, p) {
            None => return Ok(Rat::zero()),
            Some(rank) => alpha *= Rat::new(BigInt::one(), BigInt::from(p).pow(rank as u32)),
        }
    }
    Ok(alpha)
}

/// #{m in [p]^h : xi_j(m) + r_j != 0 mod p for all j} by inclusion-exclusion over the forms.
pub fn residue_count(xi: &IMat, r: &[i64], p: u64) -> BigInt {
    let d = xi.len();
    let h = xi.first().map_or(0, |r| r.len());
    assert!(d < 24, "inclusion-exclusion over {d} forms");
    let rows: Vec<Vec<u64>> = xi.iter().map(|row| row.iter().map(|x| to_mod(x, p)).collect()).collect();
    let rhs: Vec<u64> = r.iter().map(|&x| to_mod(&BigInt::from(x), p)).collect();
    let pb = BigInt::from(p);
    let mut total = BigInt::zero();
    for mask in 0u32..(1 << d) {
        let idx: Vec<usize> = (0..d).filter(|j| mask >> j & 1 == 1).collect();
        let sr: Vec<Vec<u64>> = idx.iter().map(|&j| rows[j].clone()).collect();
        let sc: Vec<u64> = idx.iter().map(|&j| rhs[j]).collect();
        if let Some(rank) = affine_rank_mod_p(&sr, &sc, p) {
            let n = pb.pow((h - rank) as u32);
            if idx.len().is_multiple_of(2) {
                total += n;
            } else {
                total -= n;
            }
        }
    }
    total
}

/// The same count by enumerating [p]^h.
pub fn residue_count_naive(xi: &IMat, r: &[i64], p: u64) -> u64 {
    let h = xi.first().map_or(0, |r| r.len());
    let rows: Vec<Vec<u64>> = xi.iter().map(|row| row.iter().map(|x| to_mod(x, p)).collect()).collect();
    let rhs: Vec<u64> = r.iter().map(|&x| to_mod(&BigInt::from(x), p)).collect();
    let mut m = vec![0u64; h];
    let mut count = 0;
    loop {
        if rows.iter().zip(&rhs).all(|(row, c)| (row.iter().zip(&m).map(|(a, b)| a * b).sum::<u64>() + c) % p != 0) {
            count += 1;
        }
        let mut k = 0;
        loop {
            if k == h {
                return count;
            }
            m[k] += 1;
            if m[k] < p {
                break;
            }
            m[k] = 0;
            k += 1;
        }
    }
}

/// beta_p = p^{-h} sum_{m in [p]^h} prod_j Lambda_{Z/pZ}(xi_j(m) + r_j).
pub fn beta_p(xi: &IMat, r: &[i64], p: u64) -> Rat {
    let d = xi.len() as u32;
    let h = xi.first().map_or(0, |r| r.len()) as u32;
    let pb = BigInt::from(p);
    let c = if h > 0 && (p as f64).powi(h as i32) <= 1e6 { BigInt::from(residue_count_naive(xi, r, p)) } else { residue_count(xi, r, p) };
    Rat::new(pb.pow(d) * c, (&pb - 1u32).pow(d) * pb.pow(h))
}

/// Primes modulo which some form vanishes or two forms become parallel.
pub fn exceptional_primes(xi: &IMat) -> Result<Vec<u64>, LocalError> {
    let d = xi.len();
    let h = xi.first().map_or(0, |r| r.len());
    let mut gs: Vec<BigInt> = Vec::new();
    for row in xi {
        gs.push(row.iter().fold(BigInt::zero(), |g, x| g.gcd(x)));
    }
    for i in 0..d {
        for j in i + 1..d {
            let mut g = BigInt::zero();
            for a in 0..h {
                for b in a + 1..h {
                    g = g.gcd(&(&xi[i][a] * &xi[j][b] - &xi[i][b] * &xi[j][a]));
                }
            }
            gs.push(g);
        }
    }
    let mut out = Vec::new();
    for (k, g) in gs.iter().enumerate() {
        if g.is_zero() {
            // a zero form, or a parallel pair
            let pair = if k < d { (k, k) } else { pair_of(k - d, d) };
            return Err(LocalError::InfiniteComplexity(pair.0, pair.1));
        }
        let g = g.abs().to_u64().expect("coefficient gcd fits in u64");
        out.extend(prime_factors(g));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn pair_of(mut k: usize, d: usize) -> (usize, usize) {
    for i in 0..d {
        let n = d - i - 1;
        if k < n {
            return (i, i + 1 + k);
        }
        k -= n;
    }
    unreachable!()
}

#[derive(Clone, Debug, Serialize)]
pub struct TailModel {
    /// |beta_p - 1| <= k / p^2 assumed for p > P_cut
    pub k: f64,
    /// empirical max of |beta_p - 1| p^2 over the top decade of primes, before inflation
    pub k_empirical: f64,
    pub inflation: f64,
    pub p_cut: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalSeries {
    #[serde(skip)]
    pub factors: Vec<(u64, Rat)>,
    pub truncated: f64,
    pub lo: f64,
    pub hi: f64,
    pub tail: TailModel,
    /// first prime with beta_p = 0; the series is then exactly 0
    pub zero_at: Option<u64>,
}

impl LocalSeries {
    /// The constant series 1, for purely irrational systems.
    pub fn one(p_cut: u64) -> Self {
        LocalSeries {
            factors: Vec::new(),
            truncated: 1.0,
            lo: 1.0,
            hi: 1.0,
            tail: TailModel { k: 0.0, k_empirical: 0.0, inflation: 4.0, p_cut },
            zero_at: None,
        }
    }
    pub fn factor(&self, p: u64) -> Option<&Rat> {
        self.factors.binary_search_by_key(&p, |f| f.0).ok().map(|i| &self.factors[i].1)
    }
    /// JSON with the first `cap` per-prime factors as "num/den" strings.
    pub fn to_json(&self, cap: usize) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("serialisable");
        let fs: Vec<serde_json::Value> = self
            .factors
            .iter()
            .take(cap)
            .map(|(p, b)| serde_json::json!({"p": p, "beta": b.to_string(), "approx": rat_f64(b)}))
            .collect();
        v["factors"] = serde_json::Value::Array(fs);
        v["factors_total"] = self.factors.len().into();
        v
    }
}

pub fn rat_f64(r: &Rat) -> f64 {
    r.numer().to_f64().unwrap() / r.denom().to_f64().unwrap()
}

/// 𝔖_r = prod_p beta_p, exact for p <= P_cut, with a tail interval from |beta_p - 1| <= K/p^2.
pub fn singular_series(xi: &IMat, r: &[i64], p_cut: u64) -> Result<LocalSeries, LocalError> {
    shape(xi, r)?;
    if let Some((i, j)) = forms::parallel_pair(&FormSystem::from_xi(xi)) {
        return Err(LocalError::InfiniteComplexity(i, j));
    }
    let exc = exceptional_primes(xi)?;
    if let Some(&big) = exc.last() {
        if p_cut < big {
            return Err(LocalError::PCutTooSmall { p_cut, prime: big });
        }
    }
    let table = PrimeTable::new(p_cut.max(2));
    let primes: Vec<u64> = table.primes_upto(p_cut).iter().map(|&p| p as u64).collect();
    let factors: Vec<(u64, Rat)> = primes.par_iter().map(|&p| (p, beta_p(xi, r, p))).collect();
    let zero_at = factors.iter().find(|(_, b)| b.is_zero()).map(|f| f.0);
    // ascending-prime accumulation in log space
    let mut log = 0.0f64;
    let mut comp = 0.0f64;
    let mut k_emp = 0.0f64;
    for (p, b) in &factors {
        if zero_at.is_some() {
            break;
        }
        let x = rat_f64(b);
        let term = x.ln();
        let t = log + term;
        comp += if log.abs() >= term.abs() { (log - t) + term } else { (term - t) + log };
        log = t;
        if *p * 10 > p_cut {
            k_emp = k_emp.max((x - 1.0).abs() * (*p as f64).powi(2));
        }
    }
    let inflation = 4.0;
    let k = k_emp * inflation;
    let tail = TailModel { k, k_empirical: k_emp, inflation, p_cut };
    if zero_at.is_some() {
        return Ok(LocalSeries { factors, truncated: 0.0, lo: 0.0, hi: 0.0, tail, zero_at });
    }
    let truncated = (log + comp).exp();
    // sum_{p > P} K/p^2 <= K/P; ln(1+x) lies in [x - x^2, x] for |x| <= 1/2
    let s = k / p_cut as f64;
    Ok(LocalSeries { factors, truncated, lo: truncated * (-2.0 * s).exp(), hi: truncated * s.exp(), tail, zero_at })
}

#[derive(Clone, Debug, Serialize)]
pub struct PredictionTerm {
    pub r_tilde: Vec<i64>,
    pub series: LocalSeries,
    pub j: QuadResult,
}

#[derive(Clone, Debug, Serialize)]
pub struct Prediction {
    /// sum_r 𝔖_r J_r, the predicted value of the normalised T form with Lambda' weights
    pub value: f64,
    /// half-width of the propagated error interval
    pub error: f64,
    /// N^{d-m} value / log^d N, the predicted number of prime solutions
    pub predicted_count: f64,
    pub terms: Vec<PredictionTerm>,
}

/// Sum over shifts of singular series times singular integral.
pub fn predicted_main_term(
    sys: &LinearSystem,
    red: &RationalReduction,
    f: &Window,
    g: &Window,
    p_cut: u64,
    qopts: QuadOptions,
) -> Result<Prediction, LocalError> {
    let mut terms = Vec::new();
    let (mut value, mut error) = (0.0, 0.0);
    for s in &red.shifts {
        let series = if red.u == 0 { LocalSeries::one(p_cut) } else { singular_series(&red.xi, &s.r_tilde, p_cut)? };
        let gw = red.window_for(sys, g, &s.r_tilde);
        let j = quad::singular_integral_j(f, &gw, &red.l_prime, &red.v_prime, &red.xi, &s.r_tilde, sys.n, qopts)?;
        value += series.truncated * j.value;
        error += series.truncated.abs() * j.std_error + j.value.abs() * 0.5 * (series.hi - series.lo);
        terms.push(PredictionTerm { r_tilde: s.r_tilde.clone(), series, j });
    }
    let nf = sys.n as f64;
    let predicted_count = value * nf.powi((sys.d - sys.m) as i32) / nf.ln().powi(sys.d as i32);
    Ok(Prediction { value, error, predicted_count, terms })
}

const ENUM_BUDGET: f64 = 1e7;

/// ((max W_j)^{-h} sum_{m in [max W]^h} prod_j Lambda_{Z/W_j Z}(xi_j(m) + r_j)) J.
pub fn local_model_main_term(xi: &IMat, r: &[i64], w: &[u64], j: f64) -> Result<f64, LocalError> {
    let (d, h) = shape(xi, r)?;
    if w.len() != d {
        return Err(LocalError::Shape("W list".into()));
    }
    if let Some(&bad) = w.iter().find(|&&x| x == 0 || !is_squarefree(x)) {
        return Err(LocalError::NotSquarefree(bad));
    }
    let wmax = *w.iter().max().unwrap_or(&1);
    if wmax == 1 {
        return Ok(j);
    }
    let size = (wmax as f64).powi(h as i32);
    if size <= ENUM_BUDGET {
        let rows: Vec<Vec<i64>> = xi.iter().map(|row| row.iter().map(|x| x.to_i64().unwrap()).collect()).collect();
        let mut m = vec![0i64; h];
        let mut acc = 0.0;
        'outer: loop {
            let mut prod = 1.0;
            for jx in 0..d {
                let n = rows[jx].iter().zip(&m).map(|(a, b)| a * b).sum::<i64>() + r[jx];
                prod *= crate::arith::local_von_mangoldt(w[jx], n);
                if prod == 0.0 {
                    break;
                }
            }
            acc += prod;
            let mut k = 0;
            loop {
                if k == h {
                    break 'outer;
                }
                m[k] += 1;
                if m[k] < wmax as i64 {
                    break;
                }
                m[k] = 0;
                k += 1;
            }
        }
        return Ok(acc / size * j);
    }
    // Lambda_{Z/WZ} = prod_{p | W} Lambda_{Z/pZ}, so by CRT the average splits over p | max W
    if w.iter().any(|x| !wmax.is_multiple_of(*x)) {
        return Err(LocalError::Budget { size, budget: ENUM_BUDGET });
    }
    let mut factor = Rat::one();
    for p in prime_factors(wmax) {
        let idx: Vec<usize> = (0..d).filter(|&k| w[k].is_multiple_of(p)).collect();
        let sub: IMat = idx.iter().map(|&k| xi[k].clone()).collect();
        let rs: Vec<i64> = idx.iter().map(|&k| r[k]).collect();
        factor *= beta_p(&sub, &rs, p);
    }
    Ok(rat_f64(&factor) * j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebraic::intmat::from_i64;

    fn rat(a: i64, b: i64) -> Rat {
        Rat::new(a.into(), b.into())
    }

    #[test]
    fn alpha_examples() {
        let id = from_i64(&[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert_eq!(local_factor_alpha(&id, &[2, 3, 5], &[0, 0, 0]).unwrap(), rat(1, 30));
        assert_eq!(local_factor_alpha(&id, &[6, 3, 5], &[1, 2, 0]).unwrap(), rat(1, 90));
        let same = from_i64(&[vec![1], vec![1]]);
        assert_eq!(local_factor_alpha(&same, &[2, 2], &[0, 1]).unwrap(), Rat::zero());
        let ap = from_i64(&[vec![1, 0], vec![1, 1], vec![1, 2]]);
        assert_eq!(local_factor_alpha(&ap, &[2, 2, 2], &[0, 0, 0]).unwrap(), rat(1, 4));
        assert_eq!(local_factor_alpha(&ap, &[4, 2, 2], &[0, 0, 0]), Err(LocalError::NotSquarefree(4)));
        // agrees with the index of the solution lattice
        let (_, b) = crate::counter::congruence_lattice(&ap, &[6, 10, 15], &[1, 2, 3]).unwrap();
        let det = crate::algebraic::intmat::det(&b).abs();
        assert_eq!(local_factor_alpha(&ap, &[6, 10, 15], &[1, 2, 3]).unwrap(), Rat::new(BigInt::one(), det));
    }

    #[test]
    fn residue_counts_agree() {
        let xi = from_i64(&[vec![1, 0, 0], vec![1, 1, 0], vec![1, 2, 0], vec![0, 0, 1]]);
        for p in [2u64, 3, 5, 7, 11, 13] {
            for r in [[0i64, 0, 0, 0], [1, -1, 2, 5]] {
                assert_eq!(residue_count(&xi, &r, p), BigInt::from(residue_count_naive(&xi, &r, p)), "{p}");
            }
        }
    }

    #[test]
    fn series_examples() {
        let one = from_i64(&[vec![1]]);
        let s = singular_series(&one, &[0], 1000).unwrap();
        assert!(s.factors.iter().all(|(_, b)| b.is_one()));
        assert_eq!(s.truncated, 1.0);
        let xi = from_i64(&[vec![1, 0, 0], vec![1, 1, 0], vec![1, 2, 0], vec![0, 0, 1]]);
        let s = singular_series(&xi, &[0, 0, 0, 0], 2000).unwrap();
        assert_eq!(s.factor(2), Some(&rat(2, 1)));
        for &(p, ref b) in &s.factors[1..] {
            let p = p as i64;
            assert_eq!(*b, rat(p * (p - 2), (p - 1) * (p - 1)));
        }
        assert!(s.lo <= s.truncated && s.truncated <= s.hi);
        assert_eq!(singular_series(&from_i64(&[vec![1, 2], vec![2, 4]]), &[0, 0], 100).unwrap_err(), LocalError::InfiniteComplexity(0, 1));
        assert!(matches!(singular_series(&from_i64(&[vec![1, 0], vec![1, 7]]), &[0, 0], 5), Err(LocalError::PCutTooSmall { prime: 7, .. })));
        // x and x + 1 cannot both be odd
        let s = singular_series(&from_i64(&[vec![1], vec![1]]), &[0, 1], 10);
        assert!(s.is_err());
        // x2 and 2 x1 + x2 + 1 are never both odd
        let s = singular_series(&from_i64(&[vec![0, 1], vec![2, 1]]), &[0, 1], 10).unwrap();
        assert_eq!((s.zero_at, s.truncated, s.hi), (Some(2), 0.0, 0.0));
    }

    #[test]
    fn periodic_in_shift() {
        let xi = from_i64(&[vec![1, 0], vec![1, 1], vec![1, 3]]);
        let a = singular_series(&xi, &[1, 2, 0], 29).unwrap();
        let m: i64 = (2..=29).filter(|&p| crate::arith::sieve::is_prime_trial(p as u64)).product();
        let b = singular_series(&xi, &[1 + m, 2 - 2 * m, 5 * m], 29).unwrap();
        assert_eq!(a.factors, b.factors);
    }

    #[test]
    fn local_model() {
        let ap = from_i64(&[vec![1, 0], vec![1, 1], vec![1, 2]]);
        assert_eq!(local_model_main_term(&ap, &[0, 0, 0], &[1, 1, 1], 2.5).unwrap(), 2.5);
        let one = from_i64(&[vec![1]]);
        assert!((local_model_main_term(&one, &[0], &[6], 1.0).unwrap() - 1.0).abs() < 1e-12);
        let v = local_model_main_term(&ap, &[0, 0, 0], &[6, 6, 6], 1.0).unwrap();
        assert_eq!(beta_p(&ap, &[0, 0, 0], 2), rat(2, 1));
        assert_eq!(beta_p(&ap, &[0, 0, 0], 3), rat(3, 4));
        assert!((v - 1.5).abs() < 1e-12, "{v}");
    }
}
