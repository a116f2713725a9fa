use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;

use kedmd::poly::UnivariatePolynomial;
use kedmd::wendland::{apply_integral, base_poly, WendlandKernel, MAX_DIM, MAX_SMOOTHNESS};

fn supported() -> impl Iterator<Item = (usize, usize)> {
    (1..=MAX_DIM)
        .flat_map(|d| (0..=MAX_SMOOTHNESS).map(move |k| (d, k)))
        .filter(|&(d, k)| k > 0 || d >= 3)
}

fn ratio(n: i64, m: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(m))
}

#[test]
fn degree_formula_for_every_supported_pair() {
    for (d, k) in supported() {
        let kern = WendlandKernel::new(d, k).unwrap();
        assert_eq!(
            kern.poly().degree(),
            Some(d / 2 + 3 * k + 1),
            "d = {d}, k = {k}"
        );
        assert_eq!(kern.ell(), d / 2 + k + 1);
        assert!(kern.poly().eval_exact(&BigRational::one()).is_zero());
        assert!(kern.poly().coeff(0) > BigRational::zero());
        assert_eq!(kern.sigma(), (d as f64 + 1.0) / 2.0 + k as f64);
    }
}

#[test]
fn smoothness_defects_vanish_through_order_2k() {
    for (d, k) in supported() {
        let kern = WendlandKernel::new(d, k).unwrap();
        for order in 0..=2 * k {
            assert!(
                kern.smoothness_defect_exact(order).is_zero(),
                "d = {d}, k = {k}, order = {order}"
            );
        }
        // p_{d,k} has a root of multiplicity ell + k at r = 1
        let first = kern.ell() + k;
        for order in 2 * k + 1..first {
            assert!(kern.smoothness_defect_exact(order).is_zero());
        }
        assert!(
            !kern.smoothness_defect_exact(first).is_zero(),
            "d = {d}, k = {k}"
        );
    }
}

#[test]
fn phi_3_1_is_exact() {
    // (1 - r)^4 (4 r + 1) / 20
    let one_minus_r = UnivariatePolynomial::from_integers(&[1, -1]);
    let expected = &one_minus_r.pow(4) * &UnivariatePolynomial::from_integers(&[1, 4]);
    let expected = expected.scale(&ratio(1, 20));
    assert_eq!(WendlandKernel::new(3, 1).unwrap().poly(), &expected);
    assert_eq!(apply_integral(&base_poly(3)), expected);
}

#[test]
fn phi_3_0_is_squared_hat() {
    let kern = WendlandKernel::new(3, 0).unwrap();
    assert_eq!(
        kern.poly(),
        &UnivariatePolynomial::from_integers(&[1, -2, 1])
    );
    assert_eq!(kern.smoothness_defect_exact(2), ratio(2, 1));
}

#[test]
fn integral_of_constant() {
    assert_eq!(
        apply_integral(&UnivariatePolynomial::from_integers(&[1])),
        UnivariatePolynomial::from_ratios(&[(1, 2), (0, 1), (-1, 2)])
    );
    assert!(apply_integral(&UnivariatePolynomial::zero()).is_zero());
}

#[test]
fn shipped_kernels_decrease_on_their_support() {
    for d in 1..=3 {
        for k in 0..=3 {
            let Ok(kern) = WendlandKernel::new(d, k) else {
                continue;
            };
            let mut prev = kern.eval_phi(0.0);
            for i in 1..=1000 {
                let v = kern.eval_phi(i as f64 / 1000.0);
                assert!(
                    v <= prev + 1e-16,
                    "d = {d}, k = {k}, r = {}",
                    i as f64 / 1000.0
                );
                prev = v;
            }
        }
    }
}

#[test]
fn invalid_pairs_are_rejected() {
    let err = WendlandKernel::new(2, 0).unwrap_err();
    assert!(err.to_string().contains("d >= 3"), "{err}");
    assert!(WendlandKernel::new(0, 1).is_err());
    assert!(WendlandKernel::new(MAX_DIM + 1, 1).is_err());
    assert!(WendlandKernel::new(2, MAX_SMOOTHNESS + 1).is_err());
    assert!(WendlandKernel::with_scale(2, 1, 0.0).is_err());
    assert!(WendlandKernel::with_scale(2, 1, f64::NAN).is_err());
}

#[test]
fn closed_form_values() {
    let kern = WendlandKernel::new(3, 1).unwrap();
    assert_eq!(kern.eval_phi(0.0), 0.05);
    assert!((kern.eval_phi(0.5) - 0.009375).abs() < 1e-17);
    assert_eq!(kern.eval_phi(1.0), 0.0);
    assert_eq!(kern.eval_phi(3.0), 0.0);
    let v = kern
        .eval_kernel(&[0.0, 0.0, 0.0], &[0.5, 0.0, 0.0])
        .unwrap();
    assert!((v - 0.009375).abs() < 1e-17);
    assert!(kern.eval_kernel(&[0.0; 2], &[0.0; 3]).is_err());
}

proptest! {
    #[test]
    fn integral_operator_identities(coeffs in prop::collection::vec(-20i64..=20, 1..7)) {
        let p = UnivariatePolynomial::from_integers(&coeffs);
        let q = apply_integral(&p);
        prop_assert!(q.eval_exact(&BigRational::one()).is_zero());
        // q'(r) = -r p(r)
        let expected = -&(&UnivariatePolynomial::identity() * &p);
        prop_assert_eq!(q.derivative(), expected);
        if !p.is_zero() {
            prop_assert_eq!(q.degree(), p.degree().map(|n| n + 2));
        }
    }

    #[test]
    fn kernel_is_symmetric_and_compact(
        d in 1usize..=4,
        k in 1usize..=3,
        scale in 0.2f64..3.0,
        x in prop::collection::vec(-2.0f64..2.0, 4),
        z in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let kern = WendlandKernel::with_scale(d, k, scale).unwrap();
        let (x, z) = (&x[..d], &z[..d]);
        let a = kern.eval_kernel(x, z).unwrap();
        prop_assert_eq!(a, kern.eval_kernel(z, x).unwrap());
        let r = x.iter().zip(z).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        if r >= scale {
            prop_assert_eq!(a, 0.0);
        } else {
            prop_assert!(a >= 0.0 && a <= kern.diagonal());
            prop_assert!((a - kern.eval_phi(r)).abs() <= 1e-15 * kern.diagonal());
        }
    }

    #[test]
    fn base_poly_is_binomial(ell in 0usize..12) {
        let expected = UnivariatePolynomial::from_integers(&[1, -1]).pow(ell as u32);
        prop_assert_eq!(base_poly(ell), expected);
    }
}
