//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Failing criteria are reported, not hidden. The process exits 0 so the rest of the
//! workspace tests still run; set ACCEPTANCE_STRICT=1 to make any failure fatal.

use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use primeineq::algebraic::{intmat, linalg, parse_matrix, FieldElement, Mat};
use primeineq::analytic::{self, DecayVariant};
use primeineq::arith::{PrimeTable, SeqFn, SieveParams, Window};
use primeineq::counter::{self, CountOptions};
use primeineq::forms::{self, LinearSystem, ShiftSearch};
use primeineq::local;
use primeineq::quad::{self, QuadOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SURD: [[&str; 4]; 2] = [["1", "0", "sqrt2", "-sqrt3"], ["0", "1", "sqrt5", "-sqrt7"]];
const REMARK: [[&str; 4]; 2] = [["1", "-2", "1", "0"], ["0", "1", "-sqrt3", "1"]];

fn rows(r: &[[&str; 4]]) -> Vec<Vec<String>> {
    r.iter().map(|x| x.iter().map(|s| s.to_string()).collect()).collect()
}

fn system(r: &[[&str; 4]], v: Vec<f64>, eps: f64, n: u64) -> LinearSystem {
    LinearSystem::parse(&rows(r), v, eps, n).expect("valid system")
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome, results: &mut Vec<bool>) {
    let t0 = Instant::now();
    let o = f();
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {id:>2} {name}: {} ({:.1} s)", o.detail, t0.elapsed().as_secs_f64());
    results.push(o.pass);
}

fn box_constant() -> Outcome {
    let s = system(&SURD, vec![0.0, 0.0], 1.0, 1);
    let t0 = Instant::now();
    let c = quad::box_constant_cl(&s.l_f64(), &s.v, 1.0, QuadOptions { samples: 10_000_000, seed: 0x5eed }).unwrap();
    let dt = t0.elapsed();
    Outcome {
        pass: (c.value - 1.394).abs() <= 0.01 && dt <= Duration::from_secs(10),
        detail: format!("C_L = {:.5} +- {:.1e}, want 1.394 +- 0.01 within 10 s", c.value, c.std_error),
    }
}

fn main_theorem() -> Outcome {
    let t0 = Instant::now();
    let cl = quad::box_constant_cl(&system(&SURD, vec![0.0, 0.0], 1.0, 1).l_f64(), &[0.0, 0.0], 1.0, QuadOptions::default()).unwrap().value;
    let table = PrimeTable::new(100_000);
    let mut ratios = Vec::new();
    for n in [10_000u64, 100_000] {
        let s = system(&SURD, vec![0.0, 0.0], 1.0, n);
        let c = counter::count_prime_solutions(&s, &table, CountOptions::default()).unwrap();
        let nf = n as f64;
        let pred = cl * nf * nf / nf.ln().powi(4);
        ratios.push((n, c.count, c.count as f64 / pred, c.weighted / (cl * nf * nf)));
    }
    let (r4, r5) = (ratios[0].2, ratios[1].2);
    let pass = (0.7..=1.3).contains(&r5) && (r5 - 1.0).abs() < (r4 - 1.0).abs() && t0.elapsed() <= Duration::from_secs(600);
    Outcome {
        pass,
        detail: format!(
            "count/prediction {:.4} at N = 1e4, {:.4} at N = 1e5 (want [0.7, 1.3]); log-weighted ratio {:.4}, {:.4}",
            r4, r5, ratios[0].3, ratios[1].3
        ),
    }
}

fn reduction_fidelity() -> Outcome {
    let s = system(&REMARK, vec![0.0, 0.0], 1.0, 100);
    let red = forms::rational_reduction(&s, 1.0, ShiftSearch::default());
    let want = intmat::from_i64(&[vec![1, 0, 0], vec![1, 1, 0], vec![1, 2, 0], vec![0, 0, 1]]);
    let same = red.xi.len() == 4 && intmat::hnf(&red.xi).0 == intmat::hnf(&want).0;
    Outcome { pass: red.u == 1 && same, detail: format!("u = {}, Xi(Z^3) equal to the expected lattice: {same}", red.u) }
}

fn singular_series_check() -> Outcome {
    let s = system(&REMARK, vec![0.0, 0.0], 1.0, 100);
    let red = forms::rational_reduction(&s, 1.0, ShiftSearch::default());
    // the equation case: the class with Theta L p = 0
    let r = red.shifts.iter().find(|s| s.r.iter().all(|&x| x == 0)).expect("zero class").r_tilde.clone();
    let series = local::singular_series(&red.xi, &r, 100_000).unwrap();
    let table = PrimeTable::new(10_000);
    let mut mismatches = 0;
    for &p in table.primes() {
        let p = p as u64;
        let want = if p == 2 {
            BigRational::from_integer(BigInt::from(2))
        } else {
            let pb = BigInt::from(p);
            let one = BigInt::from(1);
            BigRational::new((&pb - 2u32) * &pb, (&pb - &one) * (&pb - &one))
        };
        if series.factor(p) != Some(&want) {
            mismatches += 1;
        }
    }
    // the odd-prime product carries the closed-form constant; beta_2 = 2 doubles it
    let twin = 0.660_161_815_846_869_6;
    let (lo, hi) = (series.lo / 2.0, series.hi / 2.0);
    let inside = lo <= twin && twin <= hi;
    Outcome {
        pass: mismatches == 0 && inside,
        detail: format!(
            "{mismatches} factor mismatches for p <= 1e4 (beta_2 = 2); odd-prime product {:.6} in [{lo:.6}, {hi:.6}] contains 0.660162: {inside}",
            series.truncated / 2.0
        ),
    }
}

fn decomposition() -> Outcome {
    let t = PrimeTable::new(200);
    let lam = SeqFn::lambda_prime(&t, 100);
    let fw = Window::unit_box(4);
    let four_ap: [[&str; 4]; 2] = [["1", "-2", "1", "0"], ["0", "1", "-2", "1"]];
    let cases = [("rational", four_ap, vec![0.0, 0.0]), ("mixed", REMARK, vec![0.5, -0.25]), ("irrational", SURD, vec![0.0, 0.0])];
    let mut worst = 0.0f64;
    let mut slowest = Duration::ZERO;
    for (_, r, v) in &cases {
        let s = system(r, v.clone(), 1.0, 100);
        let g = Window::smooth_cube(2, 1.5, 0.2);
        let t0 = Instant::now();
        let red = forms::rational_reduction(&s, g.radius(), ShiftSearch::default());
        let (lhs, _, diff) = forms::decomposition_check(&s, &red, &[&lam; 4], &fw, &g, 100, CountOptions::default()).unwrap();
        slowest = slowest.max(t0.elapsed());
        worst = worst.max(diff / lhs.abs().max(f64::MIN_POSITIVE));
    }
    Outcome {
        pass: worst <= 1e-9 && slowest <= Duration::from_secs(1),
        detail: format!("worst relative difference {worst:.2e} over rational, mixed and irrational systems; slowest {:.3} s", slowest.as_secs_f64()),
    }
}

fn lattice_inequalities() -> Outcome {
    let n = 100_000u64;
    let rows = vec![vec!["1".to_string(), "sqrt2".to_string(), "-sqrt3".to_string()]];
    let s = LinearSystem::parse(&rows, vec![0.0], 1.0, n).unwrap();
    let (e, r) = ([2u64, 3, 5], [1i64, 2, 3]);
    let xi = intmat::identity(3);
    let f = Window::unit_box(3);
    let g = Window::cube(1, 1.0);
    let sum = counter::lattice_restricted_sum(&f, &g, &s.l, &s.v, &e, &xi, &r, n, CountOptions::default()).unwrap();
    let alpha = local::rat_f64(&local::local_factor_alpha(&xi, &e, &r).unwrap());
    let vol = quad::box_integral_direct(&s.l_f64(), &s.v, 1.0, n as f64, QuadOptions::default()).unwrap();
    let pred = alpha * vol.value / (n as f64).powi(2);
    let rel = (sum / pred - 1.0).abs();
    Outcome { pass: rel <= 0.02, detail: format!("lattice sum {sum:.5} vs alpha J = {alpha:.5} x {:.5}; relative gap {rel:.2e} (want <= 0.02)", pred / alpha) }
}

fn gowers_decay() -> Outcome {
    let t0 = Instant::now();
    let ns: Vec<usize> = (12..=17).map(|k| 1usize << k).collect();
    let table = PrimeTable::new(1 << 17);
    let d = analytic::gowers_decay_experiment(&table, DecayVariant::LocalModel { w: 30 }, 2, &ns).unwrap();
    let vals: Vec<String> = d.rows.iter().map(|r| format!("{:.4}", r.1)).collect();
    Outcome {
        pass: d.strictly_decreasing && d.final_over_initial <= 0.7 && t0.elapsed() <= Duration::from_secs(120),
        detail: format!(
            "U^2 norms [{}]; strictly decreasing: {}; final/initial {:.4} (want <= 0.7)",
            vals.join(", "),
            d.strictly_decreasing,
            d.final_over_initial
        ),
    }
}

fn pseudorandom() -> Outcome {
    let eps = 0.1;
    let table = PrimeTable::new(100_000);
    let mut rels = Vec::new();
    for n in [10_000u64, 100_000] {
        let s = system(&SURD, vec![0.0, 0.0], eps, n);
        let p = SieveParams::new(n, 0.1, 30).unwrap();
        let nu = SeqFn::nu(&table, &p, n as i64);
        let lw = SeqFn::local_von_mangoldt(30, 1, n as i64);
        let f = Window::smooth_unit_box(4, 0.2);
        let g = Window::smooth_cube(2, eps, 0.2);
        let t = counter::t_discrete_multi(&[vec![&nu; 4], vec![&lw; 4]], &f, &g, &s.l, &s.v, n, CountOptions::default()).unwrap();
        rels.push((t.values[0] - t.values[1]).abs() / t.values[1]);
    }
    Outcome {
        pass: rels[1] <= 0.2 && rels[1] < rels[0],
        detail: format!("|T(nu) - T(Lambda_W)| / T(Lambda_W) = {:.4} at N = 1e4, {:.4} at N = 1e5 (want <= 0.2, improving)", rels[0], rels[1]),
    }
}

fn circle_diagnostics() -> Outcome {
    let table = PrimeTable::new(1_000_000);
    let row = vec![vec![1.0, 0.0, 2f64.sqrt(), -(3f64.sqrt())]];
    let major = analytic::major_arc_compare(&table, 1_000_000, 1.0, 1024).unwrap();
    let mut minors = Vec::new();
    let mut means = Vec::new();
    for n in [10_000u64, 100_000, 1_000_000] {
        minors.push(analytic::minor_arc_sup(&table, &row, n, 1.0, 1.0, 512).unwrap().sup_lower_bound);
        means.push(analytic::mean_value_estimate(&table, &row, n, 2, &[-1.0], &[1.0], QuadOptions { samples: 4096, seed: 0x5eed }).unwrap().ratio.value);
    }
    let decreasing = minors.windows(2).all(|w| w[1] < w[0]);
    let spread = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / means.iter().cloned().fold(f64::INFINITY, f64::min);
    Outcome {
        pass: major.sup <= 0.05 && decreasing && spread <= 2.0,
        detail: format!(
            "major sup |f - v|/N = {:.4}; minor sup/N^4 {:.2e}, {:.2e}, {:.2e}; mean value ratios {:.3}, {:.3}, {:.3}",
            major.sup, minors[0], minors[1], minors[2], means[0], means[1], means[2]
        ),
    }
}

fn random_field_matrix(rng: &mut ChaCha8Rng) -> Mat<FieldElement> {
    let (m, d) = (rng.gen_range(1..=3), rng.gen_range(2..=4));
    let entry = |rng: &mut ChaCha8Rng| {
        let (a, b, c): (i32, i32, i32) = (rng.gen_range(-3..=3), rng.gen_range(-2..=2), rng.gen_range(-2..=2));
        format!("{a} + {b}*sqrt2 + {c}*sqrt3")
    };
    let text: Vec<Vec<String>> = (0..m).map(|_| (0..d).map(|_| entry(rng)).collect()).collect();
    let (_, mut l) = parse_matrix(&text).unwrap();
    // make some matrices rank deficient with a field-coefficient combination
    if m >= 2 && rng.gen_bool(0.4) {
        let k = &l[0][0] + &l[m - 1][d - 1];
        let row: Vec<FieldElement> = if m == 2 { l[0].iter().map(|x| &k * x).collect() } else { l[0].iter().zip(&l[1]).map(|(x, y)| x + &(&k * y)).collect() };
        l[m - 1] = row;
    }
    l
}

fn oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    // U^2 by FFT against the definition
    let mut worst_u2 = 0.0f64;
    for n in [8usize, 33, 100, 256] {
        let f: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = analytic::gowers_norm(&f, 2).unwrap().value;
        let b = analytic::gowers_norm_direct(&f, 2).unwrap().value;
        worst_u2 = worst_u2.max((a - b).abs() / b);
    }
    // alpha against sampled residues
    let xi = intmat::from_i64(&[vec![1, 0, 0], vec![1, 1, 0], vec![1, 2, 0], vec![0, 0, 1]]);
    let (e, r) = ([2u64, 3, 5, 7], [1i64, 0, 2, 3]);
    let alpha = local::rat_f64(&local::local_factor_alpha(&xi, &e, &r).unwrap());
    let samples = 400_000;
    let hits = (0..samples)
        .filter(|_| {
            let x: Vec<i64> = (0..3).map(|_| rng.gen_range(0..210)).collect();
            (0..4).all(|j| {
                let v: i64 = (0..3).map(|k| xi[j][k].to_i64().unwrap() * x[k]).sum::<i64>() + r[j];
                v.rem_euclid(e[j] as i64) == 0
            })
        })
        .count();
    let phat = hits as f64 / samples as f64;
    let sigma = (alpha * (1.0 - alpha) / samples as f64).sqrt();
    let alpha_ok = (phat - alpha).abs() <= 3.0 * sigma;
    // exact rank against numeric rank
    let mut rank_disagree = 0;
    for _ in 0..200 {
        let l = random_field_matrix(&mut rng);
        if linalg::exact_rank(&l) != linalg::numeric_rank(&linalg::approx_matrix(&l), 1e-9) {
            rank_disagree += 1;
        }
    }
    // exact counts against a d-fold loop
    let table = PrimeTable::new(2000);
    let cases: Vec<(Vec<Vec<String>>, f64, u64)> = vec![
        (rows(&SURD), 3.0, 300),
        (rows(&REMARK), 0.5, 300),
        (vec![vec!["1".into(), "sqrt2".into(), "-sqrt3".into()]], 0.5, 2000),
    ];
    let mut count_disagree = 0;
    for (r, eps, n) in cases {
        let s = LinearSystem::parse(&r, vec![0.0; r.len()], eps, n).unwrap();
        let c = counter::count_prime_solutions(&s, &table, CountOptions::default()).unwrap().count;
        if c != naive_count(&s, &table) {
            count_disagree += 1;
        }
    }
    Outcome {
        pass: worst_u2 <= 1e-10 && alpha_ok && rank_disagree == 0 && count_disagree == 0,
        detail: format!(
            "U^2 FFT vs direct {worst_u2:.1e}; alpha {alpha:.6} vs sampled {phat:.6} (3 sigma = {:.1e}); {rank_disagree}/200 rank disagreements; {count_disagree}/3 count disagreements",
            3.0 * sigma
        ),
    }
}

fn naive_count(s: &LinearSystem, table: &PrimeTable) -> u64 {
    let lf = s.l_f64();
    let ps: Vec<f64> = table.primes_upto(s.n).iter().map(|&p| p as f64).collect();
    let mut idx = vec![0usize; s.d];
    let mut count = 0;
    loop {
        let ok = (0..s.m).all(|i| (lf[i].iter().zip(&idx).map(|(a, &k)| a * ps[k]).sum::<f64>() + s.v[i]).abs() <= s.epsilon);
        count += ok as u64;
        let mut j = 0;
        loop {
            if j == s.d {
                return count;
            }
            idx[j] += 1;
            if idx[j] < ps.len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

fn main() {
    let mut results = Vec::new();
    run(1, "box constant", box_constant, &mut results);
    run(2, "main theorem desk check", main_theorem, &mut results);
    run(3, "rational reduction fidelity", reduction_fidelity, &mut results);
    run(4, "singular series", singular_series_check, &mut results);
    run(5, "decomposition identity", decomposition, &mut results);
    run(6, "inequalities in lattices", lattice_inequalities, &mut results);
    run(7, "Gowers decay", gowers_decay, &mut results);
    run(8, "pseudorandomness experiment", pseudorandom, &mut results);
    run(9, "circle method diagnostics", circle_diagnostics, &mut results);
    run(10, "oracle equivalences", oracles, &mut results);
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed < results.len() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
