#![allow(clippy::needless_range_loop)]

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use primeineq::algebraic::field::rat_to_f64;
use primeineq::algebraic::intmat::{self, from_i64, hnf, snf, IMat};
use primeineq::algebraic::linalg::{approx_matrix, numeric_rank};
use primeineq::algebraic::{exact_rank, field_from_sqrts, parse_matrix, FieldElement, Rat};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

#[test]
fn degree_sixteen_product_identity() {
    let k = field_from_sqrts(&[2, 3, 5, 7]).unwrap();
    assert_eq!(k.degree(), 16);
    let s = |n| FieldElement::sqrt(&k, n).unwrap();
    let prod = &s(2) * &s(3);
    let (lo, hi) = prod.eval(200);
    let tol = Rat::new(BigInt::from(1), BigInt::from(10).pow(30));
    assert!(&hi - &lo < tol);
    // sqrt6 = 2.449489742783178098197284074705891391965947480656670128432692567250960377...
    let sqrt6 = Rat::new(
        "2449489742783178098197284074705891391965947".parse().unwrap(),
        BigInt::from(10).pow(42),
    );
    assert!((&lo - &sqrt6).abs() < tol);
    assert!((rat_to_f64(&lo) - 6f64.sqrt()).abs() < 1e-15);
}

#[test]
fn eval_narrows_with_precision() {
    let k = field_from_sqrts(&[2, 3]).unwrap();
    let e = FieldElement::sqrt(&k, 2).unwrap() + FieldElement::sqrt(&k, 3).unwrap();
    let mut last = None;
    for bits in [40u32, 80, 160, 320, 400] {
        let (lo, hi) = e.eval(bits);
        let w = &hi - &lo;
        if let Some(prev) = last {
            assert!(w <= prev);
        }
        last = Some(w);
    }
}

#[test]
fn rank_examples() {
    let id = parse_matrix(&[
        vec!["1".into(), "0".into(), "0".into()],
        vec!["0".into(), "1".into(), "0".into()],
        vec!["0".into(), "0".into(), "1".into()],
    ])
    .unwrap()
    .1;
    assert_eq!(exact_rank(&id), 3);
    let m = parse_matrix(&[vec!["1".into(), "sqrt2".into()], vec!["sqrt2".into(), "2".into()]]).unwrap().1;
    assert_eq!(exact_rank(&m), 1);
    let surd = parse_matrix(&[
        vec!["1".into(), "0".into(), "sqrt2".into(), "-sqrt3".into()],
        vec!["0".into(), "1".into(), "sqrt5".into(), "-sqrt7".into()],
    ])
    .unwrap()
    .1;
    assert_eq!(exact_rank(&surd), 2);
}

/// 200 random 3x3 matrices over Q(sqrt2, sqrt3), half of them forced to be singular.
#[test]
fn exact_rank_matches_numeric_rank() {
    let k = field_from_sqrts(&[2, 3]).unwrap();
    let basis = [
        FieldElement::one(&k),
        FieldElement::sqrt(&k, 2).unwrap(),
        FieldElement::sqrt(&k, 3).unwrap(),
        FieldElement::sqrt(&k, 6).unwrap(),
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut agree = 0;
    for trial in 0..200 {
        let rand_elt = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut e = FieldElement::zero(&k);
            for b in &basis {
                let c: i64 = rng.gen_range(-3..=3);
                e = &e + &b.scale(&Rat::from_integer(c.into()));
            }
            e
        };
        let mut m: Vec<Vec<FieldElement>> = (0..3).map(|_| (0..3).map(|_| rand_elt(&mut rng)).collect()).collect();
        if trial % 2 == 0 {
            let c = rand_elt(&mut rng);
            let d = rand_elt(&mut rng);
            m[2] = (0..3).map(|j| &(&c * &m[0][j]) + &(&d * &m[1][j])).collect();
        }
        if exact_rank(&m) == numeric_rank(&approx_matrix(&m), 1e-12) {
            agree += 1;
        }
    }
    assert_eq!(agree, 200);
}

fn small_mat(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<i64>>> {
    prop::collection::vec(prop::collection::vec(-9i64..=9, cols), rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn snf_is_diagonal_chain(a in small_mat(3, 4)) {
        let a: IMat = from_i64(&a);
        let (s, u, v) = snf(&a);
        prop_assert_eq!(intmat::mul(&intmat::mul(&u, &a), &v), s.clone());
        prop_assert!(intmat::is_unimodular(&u));
        prop_assert!(intmat::is_unimodular(&v));
        for i in 0..3 {
            for j in 0..4 {
                if i != j { prop_assert!(s[i][j].is_zero()); }
            }
        }
        for i in 0..2 {
            if !s[i][i].is_zero() {
                prop_assert!((&s[i + 1][i + 1] % &s[i][i]).is_zero());
            } else {
                prop_assert!(s[i + 1][i + 1].is_zero());
            }
        }
    }

    #[test]
    fn hnf_spans_same_lattice(a in small_mat(3, 4)) {
        let a: IMat = from_i64(&a);
        let (h, u) = hnf(&a);
        prop_assert_eq!(intmat::mul(&a, &u), h.clone());
        prop_assert!(intmat::is_unimodular(&u));
        prop_assert_eq!(intmat::lattice_basis(&h), intmat::lattice_basis(&a));
    }

    #[test]
    fn arithmetic_respects_intervals(a in prop::collection::vec(-20i64..=20, 4), b in prop::collection::vec(-20i64..=20, 4)) {
        let k = field_from_sqrts(&[2, 5]).unwrap();
        let basis = [FieldElement::one(&k), FieldElement::sqrt(&k, 2).unwrap(), FieldElement::sqrt(&k, 5).unwrap(), FieldElement::sqrt(&k, 10).unwrap()];
        let mk = |c: &[i64]| basis.iter().zip(c).fold(FieldElement::zero(&k), |acc, (e, &x)| &acc + &e.scale(&Rat::from_integer(x.into())));
        let x = mk(&a);
        let y = mk(&b);
        let (xl, xh) = x.eval(120);
        let (yl, yh) = y.eval(120);
        let (sl, sh) = (&x + &y).eval(120);
        prop_assert!(sl <= &xh + &yh && sh >= &xl + &yl);
        let prods = [&xl * &yl, &xl * &yh, &xh * &yl, &xh * &yh];
        let lo = prods.iter().min().unwrap();
        let hi = prods.iter().max().unwrap();
        let (pl, ph) = (&x * &y).eval(120);
        prop_assert!(pl <= *hi && ph >= *lo);
        let d = &x - &y;
        prop_assert_eq!(d.sign() == 0, a == b);
        let approx = x.to_f64() - y.to_f64();
        if approx.abs() > 1e-9 { prop_assert_eq!(d.sign() as f64, approx.signum()); }
    }
}
