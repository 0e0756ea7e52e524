//! Property suites: symbol structure, quadrature exactness, lumped weights,
//! stability polynomial and DG basis independence.

mod common;

use nalgebra::Vector3;
use proptest::prelude::*;
use tetdisp::elements::RuleName;
use tetdisp::symbol::{compute_ck, stability_polynomial};

use common::*;

fn kappa() -> impl Strategy<Value = Vector3<f64>> {
    (-4.0..4.0f64, -4.0..4.0f64, -4.0..4.0f64).prop_map(|(a, b, c)| Vector3::new(a, b, c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn symbol_is_hermitian(k in kappa(), i in 0usize..10) {
        let (_, _, op) = &acoustic_symbols()[i];
        prop_assert!(hermitian_defect(op, &k) <= 1e-13);
    }

    #[test]
    fn elastic_symbol_is_hermitian(k in kappa(), i in 0usize..3) {
        let (_, _, op) = &elastic_symbols()[i];
        prop_assert!(hermitian_defect(op, &k) <= 1e-13);
    }

    #[test]
    fn symbol_is_positive_semidefinite(k in kappa(), i in 0usize..10) {
        let (_, _, op) = &acoustic_symbols()[i];
        prop_assert!(min_eigenvalue_ratio(op, &k) >= -1e-12);
    }

    #[test]
    fn spectrum_is_reciprocal(k in kappa(), i in 0usize..10) {
        let (_, _, op) = &acoustic_symbols()[i];
        let a = op.eigenvalues(&k).unwrap();
        let b = op.eigenvalues(&(-k)).unwrap();
        prop_assert!(spectrum_distance(&a, &b) <= 1e-11);
    }

    #[test]
    fn spectrum_is_periodic_in_the_reciprocal_lattice(k in kappa(), i in 0usize..10, axis in 0usize..3) {
        let (_, _, op) = &acoustic_symbols()[i];
        let mut e = Vector3::zeros();
        e[axis] = 2.0 * std::f64::consts::PI;
        let g = op.transform().wave_vector(&e);
        let a = op.eigenvalues(&k).unwrap();
        let b = op.eigenvalues(&(k + g)).unwrap();
        prop_assert!(spectrum_distance(&a, &b) <= 1e-11);
    }

    #[test]
    fn stability_polynomial_is_bounded_on_the_stable_interval(k in 1usize..=3, t in 0.0..1.0f64) {
        let c = compute_ck(k).unwrap();
        prop_assert!(stability_polynomial(t * c, k).abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn tet_rules_integrate_monomials(degree in 0usize..=12, a in 0u32..=12, b in 0u32..=12, c in 0u32..=12) {
        prop_assume!((a + b + c) as usize <= degree);
        prop_assert!(tet_rule_error(degree, [a, b, c]) <= 1e-13);
    }

    #[test]
    fn triangle_rules_integrate_monomials(degree in 0usize..=12, a in 0u32..=12, b in 0u32..=12) {
        prop_assume!((a + b) as usize <= degree);
        prop_assert!(triangle_rule_error(degree, [a, b]) <= 1e-13);
    }

    #[test]
    fn dg_spectrum_is_independent_of_the_basis(k in kappa(), p in 1usize..=3) {
        prop_assert!(basis_invariance_defect(p, &k) <= 1e-9);
    }
}

#[test]
fn kernel_modes_at_zero_wave_vector() {
    for (m, _, op) in acoustic_symbols().iter().chain(elastic_symbols()) {
        let (zero, gap) = kernel_at_zero(op);
        assert!(zero <= 1e-12, "{m}: {zero}");
        assert!(gap >= 1e-6, "{m}: {gap}");
    }
}

#[test]
fn lumped_weights_are_positive() {
    assert!(lumped_weights_positive());
}

#[test]
fn lumped_rules_reach_their_exactness_degree() {
    for r in [RuleName::ML1, RuleName::ML2, RuleName::ML3a, RuleName::ML3b] {
        let e = lumped_rule_error(r);
        assert!(e <= 1e-12, "{r}: {e}");
    }
}
