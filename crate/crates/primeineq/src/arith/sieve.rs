//! Smallest-prime-factor sieve and the multiplicative functions built on it.

use rayon::prelude::*;

/// Primes and smallest prime factors up to `limit`.
#[derive(Clone, Debug)]
pub struct PrimeTable {
    limit: u64,
    spf: Vec<u32>,
    primes: Vec<u32>,
}

impl PrimeTable {
    /// Linear sieve; O(limit) time, 4 bytes per integer.
    pub fn new(limit: u64) -> Self {
        assert!(limit < u32::MAX as u64, "sieve limit too large");
        let n = limit as usize;
        let mut spf = vec![0u32; n + 1];
        let mut primes = Vec::new();
        for i in 2..=n {
            if spf[i] == 0 {
                spf[i] = i as u32;
                primes.push(i as u32);
            }
            let si = spf[i];
            for &p in &primes {
                let ip = i * p as usize;
                if p > si || ip > n {
                    break;
                }
                spf[ip] = p;
            }
        }
        if n >= 1 {
            spf[1] = 1;
        }
        PrimeTable { limit, spf, primes }
    }

    pub fn limit(&self) -> u64 {
        self.limit
    }

    pub fn is_prime(&self, n: u64) -> bool {
        n >= 2 && n <= self.limit && self.spf[n as usize] as u64 == n
    }

    pub fn primes(&self) -> &[u32] {
        &self.primes
    }

    /// Primes p <= x.
    pub fn primes_upto(&self, x: u64) -> &[u32] {
        let k = self.primes.partition_point(|&p| (p as u64) <= x);
        &self.primes[..k]
    }

    pub fn pi(&self, x: u64) -> usize {
        self.primes_upto(x).len()
    }

    /// Factorisation of 1 <= n <= limit as (prime, exponent) pairs.
    pub fn factor(&self, mut n: u64) -> Vec<(u64, u32)> {
        assert!(n >= 1 && n <= self.limit, "{n} outside sieve range");
        let mut out: Vec<(u64, u32)> = Vec::new();
        while n > 1 {
            let p = self.spf[n as usize] as u64;
            n /= p;
            match out.last_mut() {
                Some((q, e)) if *q == p => *e += 1,
                _ => out.push((p, 1)),
            }
        }
        out
    }

    /// Squarefree divisors of n with their Mobius signs; the only divisors with mu != 0.
    pub fn squarefree_divisors(&self, n: u64) -> Vec<(u64, i32)> {
        let mut out = vec![(1u64, 1i32)];
        for (p, _) in self.factor(n) {
            let k = out.len();
            for i in 0..k {
                let (d, s) = out[i];
                out.push((d * p, -s));
            }
        }
        out
    }

    /// log n on primes and 0 elsewhere.
    pub fn lambda_prime(&self, n: u64) -> f64 {
        assert!(n >= 1 && n <= self.limit, "{n} outside sieve range");
        if self.is_prime(n) {
            (n as f64).ln()
        } else {
            0.0
        }
    }

    /// Sum of log p over primes p <= x, accumulated in ascending order.
    pub fn theta(&self, x: u64) -> f64 {
        let ps = self.primes_upto(x);
        let logs: Vec<f64> = ps.par_iter().map(|&p| (p as f64).ln()).collect();
        crate::geom::pairwise_sum(&logs)
    }
}

fn trial_factor(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let mut p = 2;
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

pub fn mobius(n: u64) -> i32 {
    assert!(n >= 1);
    let f = trial_factor(n);
    if f.iter().any(|&(_, e)| e > 1) {
        0
    } else if f.len().is_multiple_of(2) {
        1
    } else {
        -1
    }
}

pub fn euler_phi(n: u64) -> u64 {
    assert!(n >= 1);
    trial_factor(n).iter().fold(n, |acc, &(p, _)| acc / p * (p - 1))
}

pub fn prime_factors(n: u64) -> Vec<u64> {
    trial_factor(n).into_iter().map(|(p, _)| p).collect()
}

pub fn is_prime_trial(n: u64) -> bool {
    n >= 2 && trial_factor(n) == vec![(n, 1)]
}

pub fn is_squarefree(n: u64) -> bool {
    n >= 1 && trial_factor(n).iter().all(|&(_, e)| e == 1)
}

pub fn gcd(a: u64, b: u64) -> u64 {
    num_integer::Integer::gcd(&a, &b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn agrees_with_trial_division() {
        let t = PrimeTable::new(10_000);
        for n in 1..=10_000 {
            assert_eq!(t.is_prime(n), is_prime_trial(n), "{n}");
        }
        assert_eq!(t.pi(10_000), 1229);
        assert_eq!(t.factor(360), vec![(2, 3), (3, 2), (5, 1)]);
    }

    #[test]
    fn multiplicative_examples() {
        assert_eq!(mobius(6), 1);
        assert_eq!(mobius(4), 0);
        assert_eq!(euler_phi(6), 2);
        let s: i32 = (1..=12u64).filter(|d| 12 % d == 0).map(mobius).sum();
        assert_eq!(s, 0);
        let t = PrimeTable::new(100);
        let divs = t.squarefree_divisors(12);
        assert_eq!(divs.iter().map(|&(_, s)| s).sum::<i32>(), 0);
        assert_eq!(t.lambda_prime(1), 0.0);
        assert!((t.lambda_prime(2) - 2f64.ln()).abs() < 1e-15);
    }
}
