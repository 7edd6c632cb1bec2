//! Smooth bumps built from exp(-1/(1-x^2)): the fixed 1-supported bump rho, its
//! rescalings chi, smooth sandwich functions, partitions of unity, box windows.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// exp(-1/(1-x^2)) on (-1, 1), zero outside.
pub fn g(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// g and its first three derivatives.
pub fn g_derivs(x: f64) -> [f64; 4] {
    if x.abs() >= 1.0 {
        return [0.0; 4];
    }
    let s = 1.0 - x * x;
    let v = (-1.0 / s).exp();
    if v == 0.0 {
        return [0.0; 4];
    }
    // phi = -1/s
    let p1 = -2.0 * x / (s * s);
    let p2 = -2.0 / (s * s) - 8.0 * x * x / (s * s * s);
    let p3 = -24.0 * x / (s * s * s) - 48.0 * x * x * x / (s * s * s * s);
    [v, p1 * v, (p2 + p1 * p1) * v, (p3 + 3.0 * p1 * p2 + p1 * p1 * p1) * v]
}

const CDF_CELLS: usize = 1 << 14;

struct Cdf {
    mass: f64,
    nodes: Vec<f64>,
}

fn cdf_table() -> &'static Cdf {
    static TABLE: OnceLock<Cdf> = OnceLock::new();
    TABLE.get_or_init(|| {
        let h = 2.0 / CDF_CELLS as f64;
        let mut nodes = Vec::with_capacity(CDF_CELLS + 1);
        let mut acc = 0.0;
        nodes.push(0.0);
        for i in 0..CDF_CELLS {
            let a = -1.0 + i as f64 * h;
            acc += quadrature::double_exponential::integrate(g, a, a + h, 1e-18).integral;
            nodes.push(acc);
        }
        let mass = acc;
        nodes.iter_mut().for_each(|x| *x /= mass);
        Cdf { mass, nodes }
    })
}

/// The integral of g over the real line.
pub fn g_mass() -> f64 {
    cdf_table().mass
}

/// Kernel k = g / (int g), a probability density on [-1, 1].
fn kernel(s: f64) -> f64 {
    g(s) / g_mass()
}

fn kernel_deriv(s: f64, j: usize) -> f64 {
    if j == 0 {
        kernel(s)
    } else {
        g_derivs(s)[j] / g_mass()
    }
}

/// Distribution function of the kernel, by cubic Hermite interpolation of a table.
pub fn kernel_cdf(s: f64) -> f64 {
    if s <= -1.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let t = cdf_table();
    let h = 2.0 / CDF_CELLS as f64;
    let u = (s + 1.0) / h;
    let i = (u.floor() as usize).min(CDF_CELLS - 1);
    let x0 = -1.0 + i as f64 * h;
    let r = (s - x0) / h;
    let (y0, y1) = (t.nodes[i], t.nodes[i + 1]);
    let (m0, m1) = (kernel(x0) * h, kernel(x0 + h) * h);
    let r2 = r * r;
    let r3 = r2 * r;
    (2.0 * r3 - 3.0 * r2 + 1.0) * y0 + (r3 - 2.0 * r2 + r) * m0 + (-2.0 * r3 + 3.0 * r2) * y1 + (r3 - r2) * m1
}

/// Indicator of [a, b] convolved with the kernel at half-width w.
/// Supported on [a - w, b + w] and equal to 1 on [a + w, b - w].
pub fn mollified_interval(x: f64, a: f64, b: f64, w: f64) -> f64 {
    (kernel_cdf((x - a) / w) - kernel_cdf((x - b) / w)).clamp(0.0, 1.0)
}

/// j-th derivative of `mollified_interval` in x, 1 <= j <= 4.
pub fn mollified_interval_deriv(x: f64, a: f64, b: f64, w: f64, j: usize) -> f64 {
    assert!((1..=4).contains(&j));
    (kernel_deriv((x - a) / w, j - 1) - kernel_deriv((x - b) / w, j - 1)) / w.powi(j as i32)
}

// rho is the delta = 1/4 minorant of [0,1], recentred and stretched onto [-1, 1]
const RHO_EDGE: f64 = 6.0 / 7.0;
const RHO_W: f64 = 1.0 / 7.0;

/// The fixed 1-supported bump: support [-1, 1], identically 1 on [-5/7, 5/7].
pub fn rho(x: f64) -> f64 {
    mollified_interval(x, -RHO_EDGE, RHO_EDGE, RHO_W)
}

pub fn rho_deriv(x: f64, j: usize) -> f64 {
    if j == 0 {
        rho(x)
    } else {
        mollified_interval_deriv(x, -RHO_EDGE, RHO_EDGE, RHO_W, j)
    }
}

/// c = int_0^inf |rho'(x)|^2 dx.
pub fn c_rho_2() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| {
        // rho' on [0, inf) is -k((x - a)/w)/w, supported on [a - w, a + w]
        let f = |x: f64| rho_deriv(x, 1).powi(2);
        quadrature::double_exponential::integrate(f, RHO_EDGE - RHO_W, RHO_EDGE + RHO_W, 1e-14).integral
    })
}

/// int rho.
pub fn rho_mass() -> f64 {
    // symmetric mollification preserves the mass of the indicator
    2.0 * RHO_EDGE
}

/// Maxima of |rho^(j)| for j = 0..4 over a fine grid, inflated by 1%.
pub fn rho_derivative_bounds() -> [f64; 5] {
    static B: OnceLock<[f64; 5]> = OnceLock::new();
    *B.get_or_init(|| {
        let mut out = [0.0f64; 5];
        let n = 200_000;
        for i in 0..=n {
            let x = -1.0 + 2.0 * i as f64 / n as f64;
            for (j, o) in out.iter_mut().enumerate() {
                *o = o.max(rho_deriv(x, j).abs());
            }
        }
        out.map(|x| x * 1.01)
    })
}

/// Fourier transform int rho(x) e(-xi x) dx by adaptive quadrature; slow, kept as the oracle.
pub fn rho_hat_quad(xi: f64) -> f64 {
    let xi = xi.abs();
    if xi == 0.0 {
        return rho_mass();
    }
    let pieces = (8.0 * xi).ceil().max(4.0) as usize;
    let h = 1.0 / pieces as f64;
    let f = |x: f64| rho(x) * (2.0 * PI * xi * x).cos();
    let s: f64 = (0..pieces)
        .map(|i| quadrature::double_exponential::integrate(f, i as f64 * h, (i + 1) as f64 * h, 1e-17).integral)
        .sum();
    2.0 * s
}

const TRAP_HALF: usize = 4096;

fn rho_samples() -> &'static [f64] {
    static T: OnceLock<Vec<f64>> = OnceLock::new();
    T.get_or_init(|| (0..=TRAP_HALF).map(|j| rho(j as f64 / TRAP_HALF as f64)).collect())
}

/// Fourier transform int rho(x) e(-xi x) dx; real because rho is even.
///
/// rho is compactly supported and smooth, so the trapezoid rule on [-1, 1] is exact up to
/// aliasing by rho_hat(xi +- 4096 k), negligible for |xi| below a few thousand.
pub fn rho_hat(xi: f64) -> f64 {
    let xi = xi.abs();
    if xi > 0.6 * TRAP_HALF as f64 {
        return rho_hat_quad(xi);
    }
    let t = rho_samples();
    let h = 1.0 / TRAP_HALF as f64;
    let th = 2.0 * PI * xi * h;
    let c1 = th.cos();
    let mut s = 0.0;
    let mut j = 1;
    while j < TRAP_HALF {
        // Chebyshev recurrence, reseeded every block
        let end = (j + 256).min(TRAP_HALF);
        let mut prev = ((j - 1) as f64 * th).cos();
        let mut cur = (j as f64 * th).cos();
        for k in j..end {
            s += t[k] * cur;
            let next = 2.0 * c1 * cur - prev;
            prev = cur;
            cur = next;
        }
        j = end;
    }
    h * (t[0] + 2.0 * s)
}

/// An eta-supported bump chi(x) = rho(x / eta).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothBump {
    pub eta: f64,
}

impl SmoothBump {
    pub fn eval(&self, x: f64) -> f64 {
        rho(x / self.eta)
    }
    pub fn deriv(&self, x: f64, j: usize) -> f64 {
        rho_deriv(x / self.eta, j) / self.eta.powi(j as i32)
    }
    pub fn support(&self) -> (f64, f64) {
        (-self.eta, self.eta)
    }
    pub fn integral(&self) -> f64 {
        self.eta * rho_mass()
    }
    /// d_j = max |chi^(j)|, j = 0..4.
    pub fn derivative_bounds(&self) -> [f64; 5] {
        let b = rho_derivative_bounds();
        std::array::from_fn(|j| b[j] / self.eta.powi(j as i32))
    }
    pub fn fourier(&self, alpha: f64) -> f64 {
        self.eta * rho_hat(self.eta * alpha)
    }
    /// K with |chi_hat(alpha)| <= K (1 + |alpha|)^(-4), from four integrations by parts.
    pub fn fourier_decay_constant(&self) -> f64 {
        // int |chi''''| <= 2 eta * d_4; and |chi_hat| <= int chi
        let d4 = self.derivative_bounds()[4];
        let by_parts = 2.0 * self.eta * d4 / (2.0 * PI).powi(4);
        // (1+|a|)^4 <= 16 max(1, |a|)^4
        16.0 * self.integral().max(by_parts)
    }
}

pub fn bump_chi(eta: f64) -> SmoothBump {
    assert!(eta > 0.0);
    SmoothBump { eta }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BumpError {
    #[error("delta = {0} outside (0, 1/2)")]
    DeltaRange(f64),
}

fn check_delta(delta: f64) -> Result<(), BumpError> {
    if delta > 0.0 && delta < 0.5 {
        Ok(())
    } else {
        Err(BumpError::DeltaRange(delta))
    }
}

/// Smooth sandwich of 1_[0,1]: 1_[d,1-d] <= f_minus <= 1_[0,1] <= f_plus <= 1_[-d,1+d].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub delta: f64,
}

impl Sandwich {
    pub fn minus(&self, x: f64) -> f64 {
        let d = self.delta;
        mollified_interval(x, d / 2.0, 1.0 - d / 2.0, d / 4.0)
    }
    pub fn plus(&self, x: f64) -> f64 {
        let d = self.delta;
        mollified_interval(x, -d / 2.0, 1.0 + d / 2.0, d / 4.0)
    }
}

pub fn smooth_majorant_minorant(delta: f64) -> Result<Sandwich, BumpError> {
    check_delta(delta)?;
    Ok(Sandwich { delta })
}

/// One piece of the smooth partition of unity of [-1, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PartitionPiece {
    pub a: f64,
    pub b: f64,
    pub w: f64,
}

impl PartitionPiece {
    pub fn eval(&self, x: f64) -> f64 {
        mollified_interval(x, self.a, self.b, self.w)
    }
    pub fn support(&self) -> (f64, f64) {
        (self.a - self.w, self.b + self.w)
    }
    pub fn centre(&self) -> f64 {
        (self.a + self.b) / 2.0
    }
}

/// t = ceil(4/delta) pieces, the i-th mollifying [-1 + (i-1) delta/2, -1 + i delta/2).
pub fn partition_of_unity(delta: f64) -> Result<Vec<PartitionPiece>, BumpError> {
    check_delta(delta)?;
    let t = (4.0 / delta).ceil() as usize;
    Ok((1..=t)
        .map(|i| PartitionPiece {
            a: -1.0 + (i - 1) as f64 * delta / 2.0,
            b: -1.0 + i as f64 * delta / 2.0,
            w: delta / 4.0,
        })
        .collect())
}

/// sum_S c_S prod_j f_{S_j}(x_j / 2N).
pub struct BoxApprox {
    pub pieces: Vec<(Vec<usize>, f64)>,
    pub partition: Vec<PartitionPiece>,
    pub n: f64,
    /// measured sup |F - sum F_S| on the check grid
    pub sup_error: f64,
    /// sup_error / (delta / sigma)
    pub constant: f64,
}

impl BoxApprox {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.pieces
            .iter()
            .map(|(s, c)| c * s.iter().zip(x).map(|(&i, &xj)| self.partition[i].eval(xj / (2.0 * self.n))).product::<f64>())
            .sum()
    }
}

/// Approximate F supported on [-N,N]^d, Lipschitz constant at most 1/(sigma N), by smooth boxes.
/// The error is measured on a grid with `grid` points per side.
pub fn lipschitz_box_approx(
    f: &dyn Fn(&[f64]) -> f64,
    d: usize,
    delta: f64,
    sigma: f64,
    n: f64,
    grid: usize,
) -> Result<BoxApprox, BumpError> {
    let partition = partition_of_unity(delta)?;
    let t = partition.len();
    let mut pieces = Vec::new();
    let mut s = vec![0usize; d];
    loop {
        let centre: Vec<f64> = s.iter().map(|&i| 2.0 * n * partition[i].centre()).collect();
        let c = f(&centre);
        if c != 0.0 {
            pieces.push((s.clone(), c));
        }
        let mut k = 0;
        while k < d {
            s[k] += 1;
            if s[k] < t {
                break;
            }
            s[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    let mut approx = BoxApprox { pieces, partition, n, sup_error: 0.0, constant: 0.0 };
    let mut idx = vec![0usize; d];
    let mut sup = 0.0f64;
    loop {
        let x: Vec<f64> = idx.iter().map(|&i| -n + 2.0 * n * i as f64 / (grid - 1) as f64).collect();
        sup = sup.max((f(&x) - approx.eval(&x)).abs());
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] < grid {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    approx.sup_error = sup;
    approx.constant = sup / (delta / sigma);
    Ok(approx)
}

/// One-dimensional cut-off profile on an interval [lo, hi].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// sharp indicator of [lo, hi]
    Indicator { lo: f64, hi: f64 },
    /// smooth minorant, supported in [lo, hi], 1 on the inner (1 - 2 delta) fraction
    Minorant { lo: f64, hi: f64, delta: f64 },
    /// smooth majorant, 1 on [lo, hi], supported within delta (hi - lo) of it
    Majorant { lo: f64, hi: f64, delta: f64 },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Profile::Indicator { lo, hi } => {
                if x >= lo && x <= hi {
                    1.0
                } else {
                    0.0
                }
            }
            Profile::Minorant { lo, hi, delta } => Sandwich { delta }.minus((x - lo) / (hi - lo)),
            Profile::Majorant { lo, hi, delta } => Sandwich { delta }.plus((x - lo) / (hi - lo)),
        }
    }
    /// Closed interval outside which the profile vanishes.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Profile::Indicator { lo, hi } | Profile::Minorant { lo, hi, .. } => (lo, hi),
            Profile::Majorant { lo, hi, delta } => {
                let pad = 0.75 * delta * (hi - lo);
                (lo - pad, hi + pad)
            }
        }
    }
    pub fn is_sharp(&self) -> bool {
        matches!(self, Profile::Indicator { .. })
    }
    /// int of the profile.
    pub fn integral(&self) -> f64 {
        match *self {
            Profile::Indicator { lo, hi } => hi - lo,
            Profile::Minorant { lo, hi, delta } => (hi - lo) * (1.0 - delta),
            Profile::Majorant { lo, hi, delta } => (hi - lo) * (1.0 + delta),
        }
    }
}

/// Product of profiles: a box window on R^k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub profiles: Vec<Profile>,
}

impl Window {
    pub fn indicator_box(lo: &[f64], hi: &[f64]) -> Self {
        Window { profiles: lo.iter().zip(hi).map(|(&lo, &hi)| Profile::Indicator { lo, hi }).collect() }
    }
    /// Indicator of [-eps, eps]^k.
    pub fn cube(k: usize, eps: f64) -> Self {
        Self::indicator_box(&vec![-eps; k], &vec![eps; k])
    }
    pub fn smooth_cube(k: usize, eps: f64, delta: f64) -> Self {
        Window { profiles: vec![Profile::Minorant { lo: -eps, hi: eps, delta }; k] }
    }
    /// Indicator of [0, 1]^k.
    pub fn unit_box(k: usize) -> Self {
        Self::indicator_box(&vec![0.0; k], &vec![1.0; k])
    }
    pub fn smooth_unit_box(k: usize, delta: f64) -> Self {
        Window { profiles: vec![Profile::Minorant { lo: 0.0, hi: 1.0, delta }; k] }
    }
    pub fn dim(&self) -> usize {
        self.profiles.len()
    }
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut p = 1.0;
        for (pr, &xi) in self.profiles.iter().zip(x) {
            p *= pr.eval(xi);
            if p == 0.0 {
                return 0.0;
            }
        }
        p
    }
    pub fn support(&self) -> (Vec<f64>, Vec<f64>) {
        self.profiles.iter().map(|p| p.support()).unzip()
    }
    /// Half-width of the smallest origin-centred cube containing the support.
    pub fn radius(&self) -> f64 {
        self.profiles.iter().map(|p| {
            let (a, b) = p.support();
            a.abs().max(b.abs())
        }).fold(0.0, f64::max)
    }
    pub fn is_sharp(&self) -> bool {
        self.profiles.iter().any(|p| p.is_sharp())
    }
    pub fn integral(&self) -> f64 {
        self.profiles.iter().map(|p| p.integral()).product()
    }
}

/// (f * chi)(x) = sum_n f(n) chi(x - n) for finitely supported f.
pub fn convolve_chi(f: &[(i64, f64)], chi: &SmoothBump, x: f64) -> f64 {
    f.iter()
        .filter(|(n, _)| (x - *n as f64).abs() < chi.eta)
        .map(|(n, v)| v * chi.eval(x - *n as f64))
        .sum()
}

/// e(t) = exp(2 pi i t).
pub fn e(t: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_fast_path() {
        assert!((rho_hat(0.0) - rho_mass()).abs() < 1e-12);
        for xi in [0.3, 5.0, 50.0, 137.5, 600.0] {
            let (a, b) = (rho_hat(xi), rho_hat_quad(xi));
            assert!((a - b).abs() < 1e-11, "{xi} {a} {b}");
        }
    }

    #[test]
    fn rho_is_one_supported() {
        assert_eq!(rho(0.0), 1.0);
        assert_eq!(rho(0.5), 1.0);
        assert_eq!(rho(-0.5), 1.0);
        assert_eq!(rho(1.0), 0.0);
        assert_eq!(rho(-1.2), 0.0);
        for i in 0..=1000 {
            let x = -1.5 + 3.0 * i as f64 / 1000.0;
            let v = rho(x);
            assert!((0.0..=1.0).contains(&v));
        }
        // mass of a symmetric mollification
        let n = 1_000_000;
        let m: f64 = (0..n).map(|i| rho(-1.0 + 2.0 * (i as f64 + 0.5) / n as f64)).sum::<f64>() * 2.0 / n as f64;
        assert!((m - rho_mass()).abs() < 1e-9, "{m}");
    }

    #[test]
    fn derivatives_match_differences() {
        for &x in &[0.75, 0.8, 0.9, -0.77, 0.95] {
            for j in 1..=4 {
                let h = 1e-5;
                let fd = (rho_deriv(x + h, j - 1) - rho_deriv(x - h, j - 1)) / (2.0 * h);
                let an = rho_deriv(x, j);
                assert!((fd - an).abs() <= 1e-4 * (1.0 + an.abs()), "x={x} j={j} fd={fd} an={an}");
            }
        }
    }

    #[test]
    fn c_rho_exceeds_two() {
        // rho falls from 1 to 0 over length 2/7, so Cauchy-Schwarz gives c >= 7/2
        let c = c_rho_2();
        assert!(c > 3.5, "{c}");
        let by_grid: f64 = (0..200_000).map(|i| {
            let x = 5.0 / 7.0 + (i as f64 + 0.5) * (2.0 / 7.0) / 200_000.0;
            rho_deriv(x, 1).powi(2) * (2.0 / 7.0) / 200_000.0
        }).sum();
        assert!((by_grid - c).abs() < 1e-8 * c, "{by_grid} vs {c}");
    }

    #[test]
    fn sandwich_examples() {
        let s = smooth_majorant_minorant(0.1).unwrap();
        assert_eq!(s.minus(0.5), 1.0);
        assert_eq!(s.plus(-0.6), 0.0);
        for i in 0..=2000 {
            let x = -0.5 + 2.0 * i as f64 / 2000.0;
            let ind = if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 };
            let inner = if (0.1..=0.9).contains(&x) { 1.0 } else { 0.0 };
            let outer = if (-0.1..=1.1).contains(&x) { 1.0 } else { 0.0 };
            assert!(inner <= s.minus(x) && s.minus(x) <= ind && ind <= s.plus(x) && s.plus(x) <= outer, "{x}");
        }
        assert!(smooth_majorant_minorant(0.7).is_err());
    }

    #[test]
    fn partition_properties() {
        let delta = 0.1;
        let parts = partition_of_unity(delta).unwrap();
        assert_eq!(parts.len(), 40);
        let total = |x: f64| parts.iter().map(|p| p.eval(x)).sum::<f64>();
        assert!((total(0.0) - 1.0).abs() < 1e-12);
        for i in 0..=4000 {
            let x = -1.3 + 2.6 * i as f64 / 4000.0;
            let s = total(x);
            if x.abs() <= 1.0 - delta {
                assert!((s - 1.0).abs() < 1e-12, "{x} {s}");
            }
            if x.abs() > 1.0 + delta {
                assert_eq!(s, 0.0);
            }
            assert!(s <= 1.0 + 1e-12);
            assert!(parts.iter().filter(|p| p.eval(x) > 0.0).count() <= 2);
        }
        for p in &parts {
            let (a, b) = p.support();
            assert!(b - a <= 2.0 * delta);
        }
    }

    #[test]
    fn convolution_examples() {
        let chi = bump_chi(0.3);
        assert_eq!(convolve_chi(&[(0, 1.0)], &chi, 0.0), 1.0);
        assert_eq!(convolve_chi(&[(0, 1.0)], &chi, 0.6), 0.0);
    }

    #[test]
    fn fourier_decay() {
        let chi = bump_chi(1.0);
        let k = chi.fourier_decay_constant();
        for i in 0..40 {
            let a = 10f64.powf(-2.0 + 5.0 * i as f64 / 39.0);
            assert!(chi.fourier(a).abs() <= k * (1.0 + a).powi(-4), "{a}");
        }
        assert!((chi.fourier(0.0) - rho_mass()).abs() < 1e-12);
    }
}
