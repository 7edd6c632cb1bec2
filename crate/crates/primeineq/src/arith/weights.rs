//! Arithmetic weights: local von Mangoldt models, the W-trick, the smooth sieve weight
//! and the majorant nu, plus tabulated integer functions for the counting code.

use serde::{Deserialize, Serialize};

use super::bump::{c_rho_2, rho};
use super::sieve::{euler_phi, gcd, is_squarefree, PrimeTable};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ArithError {
    #[error("{n} outside the sieve range [1, {limit}]")]
    OutOfRange { n: i64, limit: u64 },
    #[error("gcd(b, W) = gcd({b}, {w}) is not 1")]
    NotCoprime { b: u64, w: u64 },
    #[error("sieve weight undefined at 0")]
    Zero,
    #[error("{0} is not squarefree")]
    NotSquarefree(u64),
    #[error("gamma = {0} must lie in (0, 1)")]
    Gamma(f64),
}

/// q/phi(q) when gcd(n, q) = 1, else 0; q = 1 gives the constant 1.
pub fn local_von_mangoldt(q: u64, n: i64) -> f64 {
    assert!(q >= 1);
    if q == 1 {
        return 1.0;
    }
    if gcd(n.unsigned_abs(), q) == 1 {
        q as f64 / euler_phi(q) as f64
    } else {
        0.0
    }
}

/// Restriction of the local model to n >= 0.
pub fn local_von_mangoldt_plus(q: u64, n: i64) -> f64 {
    if n >= 0 {
        local_von_mangoldt(q, n)
    } else {
        0.0
    }
}

/// w(N) = max(1, log log log N), or 1 when the iterated log is undefined.
pub fn w_of(n: u64) -> f64 {
    let l1 = (n as f64).ln();
    if l1 <= 1.0 {
        return 1.0;
    }
    let l3 = l1.ln().ln();
    if l3.is_nan() {
        1.0
    } else {
        l3.max(1.0)
    }
}

/// W = product of primes p <= w(N); the override wins when given.
pub fn big_w_of(n: u64, over: Option<u64>) -> u64 {
    if let Some(w) = over {
        return w;
    }
    let w = w_of(n);
    (2..=w.floor() as u64).filter(|&p| super::sieve::is_prime_trial(p)).product()
}

/// phi(W)/W * Lambda'(W n + b), zero for n < 1.
pub fn w_tricked_lambda(table: &PrimeTable, b: u64, w: u64, n: i64) -> Result<f64, ArithError> {
    if gcd(b, w) != 1 {
        return Err(ArithError::NotCoprime { b, w });
    }
    if n < 1 {
        return Ok(0.0);
    }
    let x = w as i64 * n + b as i64;
    if x as u64 > table.limit() {
        return Err(ArithError::OutOfRange { n: x, limit: table.limit() });
    }
    Ok(euler_phi(w) as f64 / w as f64 * table.lambda_prime(x as u64))
}

/// gamma, R = N^gamma, W and the normalising constant of the majorant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SieveParams {
    pub gamma: f64,
    pub r: f64,
    pub w: u64,
    pub c_rho_2: f64,
}

impl SieveParams {
    pub fn new(n: u64, gamma: f64, w: u64) -> Result<Self, ArithError> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(ArithError::Gamma(gamma));
        }
        if !is_squarefree(w) {
            return Err(ArithError::NotSquarefree(w));
        }
        let r = (n as f64).powf(gamma).max(2.0);
        Ok(SieveParams { gamma, r, w, c_rho_2: c_rho_2() })
    }
}

/// (log R) (sum_{d | n} mu(d) rho(log d / log R))^2, extended evenly to n < 0.
pub fn sieve_weight_lambda_rho(table: &PrimeTable, n: i64, p: &SieveParams) -> Result<f64, ArithError> {
    if n == 0 {
        return Err(ArithError::Zero);
    }
    let a = n.unsigned_abs();
    if a > table.limit() {
        return Err(ArithError::OutOfRange { n, limit: table.limit() });
    }
    let lr = p.r.ln();
    let s: f64 = table
        .squarefree_divisors(a)
        .into_iter()
        .map(|(d, mu)| {
            let t = (d as f64).ln() / lr;
            if t >= 1.0 {
                0.0
            } else {
                mu as f64 * rho(t)
            }
        })
        .sum();
    Ok(lr * s * s)
}

/// nu = Lambda_{rho,R,2} / (2 c) + Lambda_{Z/WZ} / 2.
pub fn nu_weight(table: &PrimeTable, n: i64, p: &SieveParams) -> Result<f64, ArithError> {
    Ok(sieve_weight_lambda_rho(table, n, p)? / (2.0 * p.c_rho_2) + 0.5 * local_von_mangoldt(p.w, n))
}

/// A real function on the integers, tabulated on [lo, lo + len) and zero outside.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqFn {
    pub lo: i64,
    pub values: Vec<f64>,
}

impl SeqFn {
    pub fn from_fn(lo: i64, hi: i64, f: impl Fn(i64) -> f64) -> Self {
        SeqFn { lo, values: (lo..=hi).map(f).collect() }
    }
    /// Finitely supported function from (point, value) pairs.
    pub fn from_points(pts: &[(i64, f64)]) -> Self {
        if pts.is_empty() {
            return SeqFn { lo: 0, values: Vec::new() };
        }
        let lo = pts.iter().map(|p| p.0).min().unwrap();
        let hi = pts.iter().map(|p| p.0).max().unwrap();
        let mut values = vec![0.0; (hi - lo + 1) as usize];
        for &(n, v) in pts {
            values[(n - lo) as usize] += v;
        }
        SeqFn { lo, values }
    }
    pub fn ones(lo: i64, hi: i64) -> Self {
        Self::from_fn(lo, hi, |_| 1.0)
    }
    /// Lambda' on [1, hi].
    pub fn lambda_prime(table: &PrimeTable, hi: i64) -> Self {
        Self::from_fn(1, hi, |n| table.lambda_prime(n as u64))
    }
    pub fn local_von_mangoldt(q: u64, lo: i64, hi: i64) -> Self {
        Self::from_fn(lo, hi, |n| local_von_mangoldt(q, n))
    }
    /// nu on [1, hi].
    pub fn nu(table: &PrimeTable, p: &SieveParams, hi: i64) -> Self {
        Self::from_fn(1, hi, |n| nu_weight(table, n, p).expect("inside the sieve range"))
    }
    #[inline]
    pub fn get(&self, n: i64) -> f64 {
        let i = n - self.lo;
        if i < 0 || i as usize >= self.values.len() {
            0.0
        } else {
            self.values[i as usize]
        }
    }
    pub fn hi(&self) -> i64 {
        self.lo + self.values.len() as i64 - 1
    }
    /// Points where the function is nonzero, ascending.
    pub fn support_points(&self) -> Vec<i64> {
        self.values.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| self.lo + i as i64).collect()
    }
    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
    pub fn sub(&self, o: &SeqFn) -> SeqFn {
        let lo = self.lo.min(o.lo);
        let hi = self.hi().max(o.hi());
        Self::from_fn(lo, hi, |n| self.get(n) - o.get(n))
    }
    pub fn restrict(&self, lo: i64, hi: i64) -> SeqFn {
        Self::from_fn(lo, hi, |n| self.get(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_model() {
        assert_eq!(local_von_mangoldt(6, 5), 3.0);
        assert_eq!(local_von_mangoldt(6, 4), 0.0);
        assert_eq!(local_von_mangoldt(1, 4), 1.0);
        for q in [1u64, 2, 6, 30, 77, 210] {
            let mean: f64 = (0..q as i64).map(|n| local_von_mangoldt(q, n + 17)).sum::<f64>() / q as f64;
            assert!((mean - 1.0).abs() < 1e-12, "{q}");
        }
        assert_eq!(local_von_mangoldt_plus(6, -5), 0.0);
    }

    #[test]
    fn w_conventions() {
        assert!((w_of(1_000_000) - 1.0).abs() < 1e-15);
        let raw = (1e6f64).ln().ln().ln();
        assert!((raw - 0.9654).abs() < 1e-4, "{raw}");
        assert_eq!(big_w_of(1_000_000, None), 1);
        assert_eq!(big_w_of(16, None), 1);
        assert_eq!(big_w_of(16, Some(30)), 30);
    }

    #[test]
    fn w_trick() {
        let t = PrimeTable::new(1000);
        assert!((w_tricked_lambda(&t, 1, 6, 1).unwrap() - 7f64.ln() / 3.0).abs() < 1e-15);
        assert_eq!(w_tricked_lambda(&t, 1, 1, 7).unwrap(), t.lambda_prime(8));
        assert!(w_tricked_lambda(&t, 2, 6, 1).is_err());
        assert_eq!(w_tricked_lambda(&t, 1, 6, 0).unwrap(), 0.0);
    }

    #[test]
    fn sieve_weight_examples() {
        let n = 1_000_000u64;
        let t = PrimeTable::new(n);
        let p = SieveParams::new(n, 0.1, 30).unwrap();
        let lr = p.r.ln();
        assert!((sieve_weight_lambda_rho(&t, 1, &p).unwrap() - lr).abs() < 1e-12);
        assert!((sieve_weight_lambda_rho(&t, 7919, &p).unwrap() - lr).abs() < 1e-12);
        assert!(sieve_weight_lambda_rho(&t, 0, &p).is_err());
        let nu = nu_weight(&t, 7919, &SieveParams { w: 1, ..p }).unwrap();
        assert!((nu - (lr / (2.0 * p.c_rho_2) + 0.5)).abs() < 1e-12);
        for k in 1..2000 {
            assert!(nu_weight(&t, k, &p).unwrap() >= 0.5 * local_von_mangoldt(30, k));
        }
    }
}
