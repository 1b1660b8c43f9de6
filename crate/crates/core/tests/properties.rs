use proptest::prelude::*;

use specequiv::opexpr::{Atom, OperatorExpr, Weight};
use specequiv::spectral::sym_eigenvalues;
use specequiv::{eval, format, make_grid, parse};

fn atom() -> impl Strategy<Value = OperatorExpr> {
    prop_oneof![
        Just(Atom::Identity),
        Just(Atom::Integrate),
        Just(Atom::IntegrateRight),
        Just(Atom::ConstProjector),
        Just(Atom::Flip),
        (0..4usize).prop_map(|i| Atom::Multiplier(Weight::named(Weight::BUILTIN[i]).unwrap())),
        (0.51f64..4.0).prop_map(|a| Atom::rl(a).unwrap()),
        (0..5usize).prop_map(Atom::PolyProjector),
    ]
    .prop_map(OperatorExpr::Atom)
}

fn scalar() -> impl Strategy<Value = f64> {
    prop_oneof![(1..5i32).prop_map(f64::from), 0.01f64..10.0, -10.0f64..-0.01]
}

fn expr() -> impl Strategy<Value = OperatorExpr> {
    atom().prop_recursive(4, 48, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(OperatorExpr::Compose),
            inner.clone().prop_map(|e| OperatorExpr::Adjoint(Box::new(e))),
            prop::collection::vec(inner.clone(), 2..3).prop_map(OperatorExpr::Tensor),
            (scalar(), inner.clone()).prop_map(|(c, e)| OperatorExpr::Scale(c, Box::new(e))),
            prop::collection::vec((scalar(), inner), 2..4).prop_map(OperatorExpr::Sum),
        ]
    })
}

/// One-axis operators built from the atoms, for the `AB` / `BA` property.
fn axis_op() -> impl Strategy<Value = OperatorExpr> {
    prop::collection::vec(
        prop_oneof![
            Just(OperatorExpr::t()),
            Just(OperatorExpr::t().adjoint()),
            Just(OperatorExpr::p()),
            Just(OperatorExpr::flip()),
            (1..3usize).prop_map(|m| OperatorExpr::Atom(Atom::PolyProjector(m))),
            (0..4usize).prop_map(|i| OperatorExpr::Atom(Atom::Multiplier(Weight::named(Weight::BUILTIN[i]).unwrap()))),
        ],
        1..4,
    )
    .prop_map(OperatorExpr::compose)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn format_then_parse_is_normalization(e in expr()) {
        let text = format(&e);
        let back = parse(&text).map_err(|err| TestCaseError::fail(format!("`{text}`: {err}")))?;
        prop_assert_eq!(back, e.normalize());
    }

    #[test]
    fn normalization_is_idempotent(e in expr()) {
        let once = e.normalize();
        prop_assert_eq!(once.normalize(), once);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// `A A*` and `A* A` share their nonzero spectrum on every grid.
    #[test]
    fn gram_products_share_spectrum(a in axis_op(), n in 8usize..40) {
        let g = make_grid(n, 1).unwrap();
        let left = OperatorExpr::compose([a.clone(), a.clone().adjoint()]);
        let right = OperatorExpr::compose([a.clone().adjoint(), a]);
        let l = sym_eigenvalues(&eval(&left, &g).unwrap().matrix).unwrap();
        let r = sym_eigenvalues(&eval(&right, &g).unwrap().matrix).unwrap();
        let scale = l[0].abs().max(1e-300);
        for (x, y) in l.iter().zip(&r) {
            prop_assert!((x - y).abs() <= 1e-10 * scale, "{x} vs {y}");
        }
    }
}
