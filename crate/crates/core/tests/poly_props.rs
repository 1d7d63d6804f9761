use proptest::prelude::*;
use sosgeom::poly::{monomial_basis, MultiIndex, Polynomial};

fn poly(k: usize, int: bool) -> impl Strategy<Value = Polynomial> {
    let coeff = if int { (-9i32..=9).prop_map(f64::from).boxed() } else { (-5.0f64..5.0).boxed() };
    proptest::collection::vec((proptest::collection::vec(0u32..4, k), coeff), 0..8).prop_map(move |terms| {
        Polynomial::from_terms(k, terms.into_iter().map(|(e, c)| (MultiIndex::new(e), c))).unwrap()
    })
}

fn triple(int: bool) -> impl Strategy<Value = (Polynomial, Polynomial, Polynomial)> {
    (1usize..=3).prop_flat_map(move |k| (poly(k, int), poly(k, int), poly(k, int)))
}

/// Largest coefficient of `a - b` relative to the larger coefficient scale.
fn rel_diff(a: &Polynomial, b: &Polynomial) -> f64 {
    let scale = a.max_abs_coeff().max(b.max_abs_coeff()).max(1.0);
    (a - b).max_abs_coeff() / scale
}

proptest! {
    #[test]
    fn ring_axioms_exact_on_integers((p, q, r) in triple(true)) {
        prop_assert_eq!(&(&p + &q) + &r, &p + &(&q + &r));
        prop_assert_eq!(&p * &(&q + &r), &(&p * &q) + &(&p * &r));
        prop_assert_eq!(&p * &q, &q * &p);
    }

    #[test]
    fn ring_axioms_on_floats((p, q, r) in triple(false)) {
        prop_assert!(rel_diff(&(&(&p + &q) + &r), &(&p + &(&q + &r))) <= 1e-12);
        prop_assert!(rel_diff(&(&p * &(&q + &r)), &(&(&p * &q) + &(&p * &r))) <= 1e-12);
        prop_assert!(rel_diff(&(&(&p * &q) * &r), &(&p * &(&q * &r))) <= 1e-12);
    }

    #[test]
    fn product_evaluates_to_product_of_values(
        (p, q, x) in (1usize..=3).prop_flat_map(|k| (poly(k, false), poly(k, false), proptest::collection::vec(-1.0f64..1.0, k)))
    ) {
        let lhs = (&p * &q).eval(&x);
        let rhs = p.eval(&x) * q.eval(&x);
        // Relative to the magnitude the cancellation can reach.
        let scale = p.max_abs_coeff().max(1.0) * q.max_abs_coeff().max(1.0) * 64.0;
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale.max(rhs.abs()), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn basis_order_is_deterministic(k in 1usize..4, d in 0usize..6) {
        let a: Vec<MultiIndex> = monomial_basis(k, d).iter().cloned().collect();
        let b: Vec<MultiIndex> = monomial_basis(k, d).iter().cloned().collect();
        prop_assert_eq!(a, b);
    }
}
