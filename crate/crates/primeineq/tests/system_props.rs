use num_bigint::BigInt;
use primeineq::algebraic::{parse_matrix, parse_scalar};
use primeineq::arith::{PrimeTable, SeqFn, Window};
use primeineq::counter::{count_prime_solutions, CountOptions};
use primeineq::forms::{
    decomposition_check, normal_form_extension, parallel_pair, rational_reduction, verify_normal_form, FormSystem,
    LinearSystem, ShiftSearch,
};
use primeineq::local::local_factor_alpha;
use primeineq::quad::{box_constant_cl, QuadOptions};
use proptest::prelude::*;

const POOL: [&str; 9] = ["1", "-1", "2", "-2", "sqrt2", "-sqrt3", "1/2", "1 + sqrt2", "sqrt6 - 1"];

fn entry() -> impl Strategy<Value = String> {
    (0..POOL.len()).prop_map(|i| POOL[i].to_string())
}

fn rows(m: usize, d: usize) -> impl Strategy<Value = Vec<Vec<String>>> {
    prop::collection::vec(prop::collection::vec(entry(), d), m)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn count_is_invariant_under_coordinate_permutation(l in rows(1, 3), perm in Just([0usize, 1, 2]).prop_shuffle(), v in -1.0f64..1.0) {
        let a = LinearSystem::parse(&l, vec![v], 1.0, 150).unwrap();
        let lp: Vec<Vec<String>> = l.iter().map(|r| perm.iter().map(|&j| r[j].clone()).collect()).collect();
        let b = LinearSystem::parse(&lp, vec![v], 1.0, 150).unwrap();
        let t = PrimeTable::new(150);
        let (ca, cb) = (
            count_prime_solutions(&a, &t, CountOptions::default()).unwrap(),
            count_prime_solutions(&b, &t, CountOptions::default()).unwrap(),
        );
        prop_assert_eq!(ca.count, cb.count);
        prop_assert!((ca.weighted - cb.weighted).abs() <= 1e-9 * ca.weighted.max(1.0));
    }

    #[test]
    fn decomposition_identity_holds(l in rows(2, 4), v in prop::collection::vec(-0.5f64..0.5, 2)) {
        // rank-deficient draws are rejected by parse
        let Ok(s) = LinearSystem::parse(&l, v, 1.0, 60) else { return Ok(()) };
        let t = PrimeTable::new(60);
        let lam = SeqFn::lambda_prime(&t, 60);
        let g = Window::cube(2, 1.0);
        let red = rational_reduction(&s, g.radius(), ShiftSearch::default());
        let (lhs, rhs, diff) = decomposition_check(&s, &red, &[&lam; 4], &Window::unit_box(4), &g, 60, CountOptions::default()).unwrap();
        prop_assert!(diff <= 1e-9 * lhs.abs().max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn normal_form_extension_self_verifies(psi in prop::collection::vec(prop::collection::vec(-3i64..=3, 3), 2..5)) {
        let sys = FormSystem::from_i64(&psi);
        prop_assume!(psi.iter().all(|r| r.iter().any(|&x| x != 0)));
        prop_assume!(parallel_pair(&sys).is_none());
        let ext = normal_form_extension(&sys).unwrap();
        prop_assert!(verify_normal_form(&ext.psi, ext.s));
        prop_assert_eq!(ext.d_prime, 3 + ext.f.len());
    }

    #[test]
    fn alpha_is_multiplicative_over_coprime_moduli(
        xi in prop::collection::vec(prop::collection::vec(-4i64..=4, 2), 3),
        r in prop::collection::vec(-5i64..=5, 3),
        a in prop::collection::vec(prop::sample::select(vec![1u64, 2, 3, 6]), 3),
        b in prop::collection::vec(prop::sample::select(vec![1u64, 5, 7, 35]), 3),
    ) {
        let xi: Vec<Vec<BigInt>> = xi.iter().map(|row| row.iter().map(|&x| BigInt::from(x)).collect()).collect();
        let ab: Vec<u64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        let whole = local_factor_alpha(&xi, &ab, &r).unwrap();
        let parts = local_factor_alpha(&xi, &a, &r).unwrap() * local_factor_alpha(&xi, &b, &r).unwrap();
        prop_assert_eq!(whole, parts);
    }

    #[test]
    fn quadrature_is_reproducible_from_seed(seed in any::<u64>(), x in 0.1f64..2.0) {
        let l = vec![vec![1.0, x, -std::f64::consts::SQRT_2]];
        let opts = QuadOptions { samples: 1 << 12, seed };
        let a = box_constant_cl(&l, &[0.0], 1.0, opts).unwrap();
        let b = box_constant_cl(&l, &[0.0], 1.0, opts).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn surd_text_round_trips(e in entry(), f in entry(), g in entry()) {
        let text = format!("({e}) * ({f}) - ({g})");
        let (_, m) = parse_matrix(&[vec![text.clone(), "sqrt2 + sqrt3".into()]]).unwrap();
        let s = m[0][0].surd_string();
        // parse both in one field so the comparison is exact
        let (_, back) = parse_matrix(&[vec![text, s.clone(), "sqrt6".into()]]).unwrap();
        prop_assert!(back[0][0] == back[0][1], "{}", s);
        prop_assert!((parse_scalar(&s).unwrap().to_f64() - m[0][0].to_f64()).abs() < 1e-9);
    }
}
