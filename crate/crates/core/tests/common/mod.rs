//! Checks shared by the property suite and the acceptance run.

#![allow(dead_code)]

use std::sync::OnceLock;

use nalgebra::Vector3;
use tetdisp::assembly::{assemble, assemble_dg_with_basis, penalty_inscribed, LocalOperatorSet, Method};
use tetdisp::elements::{dg_basis, dg_monomial_basis, mass_lumped_rule, RuleName};
use tetdisp::materials::MaterialModel;
use tetdisp::mesh::build_disphenoid_cell;
use tetdisp::quadrature::{tet_rule, triangle_rule};
use tetdisp::symbol::SymbolOperator;

pub fn acoustic() -> MaterialModel {
    MaterialModel::acoustic(1.0, 1.0).unwrap()
}

pub fn elastic() -> MaterialModel {
    MaterialModel::elastic(1.0, 2.0, 1.0).unwrap()
}

/// Acoustic symbols of the ten methods on the regular cell, built once.
pub fn acoustic_symbols() -> &'static [(Method, LocalOperatorSet, SymbolOperator)] {
    static CELL: OnceLock<Vec<(Method, LocalOperatorSet, SymbolOperator)>> = OnceLock::new();
    CELL.get_or_init(|| {
        let mesh = build_disphenoid_cell();
        Method::all()
            .into_iter()
            .map(|m| {
                let ops = assemble(m, &mesh, &acoustic()).unwrap();
                let op = SymbolOperator::new(&ops).unwrap();
                (m, ops, op)
            })
            .collect()
    })
}

/// Elastic symbols for the degree-1 methods.
pub fn elastic_symbols() -> &'static [(Method, LocalOperatorSet, SymbolOperator)] {
    static CELL: OnceLock<Vec<(Method, LocalOperatorSet, SymbolOperator)>> = OnceLock::new();
    CELL.get_or_init(|| {
        let mesh = build_disphenoid_cell();
        Method::all()
            .into_iter()
            .filter(|m| m.degree() == 1)
            .map(|m| {
                let ops = assemble(m, &mesh, &elastic()).unwrap();
                let op = SymbolOperator::new(&ops).unwrap();
                (m, ops, op)
            })
            .collect()
    })
}

/// `max |A - Aᴴ| / max |A|` of the unscaled symbol.
pub fn hermitian_defect(op: &SymbolOperator, kappa: &Vector3<f64>) -> f64 {
    let a = op.symbol_matrix(kappa);
    let n = a.nrows();
    let mut scale: f64 = 0.0;
    let mut defect: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            scale = scale.max(a[(i, j)].norm());
            defect = defect.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    defect / scale
}

/// At `κ = 0`: largest of the `m` smallest eigenvalues and the next one,
/// both relative to the largest eigenvalue at a generic wave vector.
pub fn kernel_at_zero(op: &SymbolOperator) -> (f64, f64) {
    let generic = op.transform().wave_vector(&Vector3::new(2.0, 1.0, 0.5));
    let scale = *op.eigenvalues(&generic).unwrap().last().unwrap();
    let ev = op.eigenvalues(&Vector3::zeros()).unwrap();
    let m = op.m();
    let zero = ev[..m].iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let gap = if ev.len() > m { ev[m] } else { scale };
    (zero / scale, gap / scale)
}

/// Smallest eigenvalue relative to the largest.
pub fn min_eigenvalue_ratio(op: &SymbolOperator, kappa: &Vector3<f64>) -> f64 {
    let ev = op.eigenvalues(kappa).unwrap();
    ev[0] / ev[ev.len() - 1]
}

/// Largest relative difference between two sorted spectra.
pub fn spectrum_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = a.iter().chain(b).fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Closed-form `∫ x^a y^b z^c` over the unit tetrahedron.
pub fn exact_tet_monomial(a: u32, b: u32, c: u32) -> f64 {
    let f = |n: u32| (1..=n).map(f64::from).product::<f64>();
    f(a) * f(b) * f(c) / f(a + b + c + 3)
}

/// Closed-form `∫ x^a y^b` over the unit triangle.
pub fn exact_triangle_monomial(a: u32, b: u32) -> f64 {
    let f = |n: u32| (1..=n).map(f64::from).product::<f64>();
    f(a) * f(b) / f(a + b + 2)
}

pub fn tet_rule_error(degree: usize, e: [u32; 3]) -> f64 {
    let q = tet_rule(degree).unwrap();
    let v: f64 = q
        .points
        .iter()
        .zip(&q.weights)
        .map(|(p, w)| w * p[0].powi(e[0] as i32) * p[1].powi(e[1] as i32) * p[2].powi(e[2] as i32))
        .sum();
    let exact = exact_tet_monomial(e[0], e[1], e[2]);
    (v - exact).abs() / exact
}

pub fn triangle_rule_error(degree: usize, e: [u32; 2]) -> f64 {
    let q = triangle_rule(degree).unwrap();
    let v: f64 = q
        .points
        .iter()
        .zip(&q.weights)
        .map(|(p, w)| w * p[0].powi(e[0] as i32) * p[1].powi(e[1] as i32))
        .sum();
    let exact = exact_triangle_monomial(e[0], e[1]);
    (v - exact).abs() / exact
}

/// Worst relative error of a mass-lumped rule over all monomials up to its
/// stated exactness degree.
pub fn lumped_rule_error(name: RuleName) -> f64 {
    let rule = mass_lumped_rule(name).unwrap();
    let pts = rule.reference_points();
    let w = rule.reference_weights();
    let d = rule.exactness_degree as u32;
    let mut worst: f64 = 0.0;
    for a in 0..=d {
        for b in 0..=d - a {
            for c in 0..=d - a - b {
                let v: f64 = pts
                    .iter()
                    .zip(&w)
                    .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32))
                    .sum();
                let exact = exact_tet_monomial(a, b, c);
                worst = worst.max((v - exact).abs() / exact);
            }
        }
    }
    worst
}

pub fn lumped_weights_positive() -> bool {
    [RuleName::ML1, RuleName::ML2, RuleName::ML3a, RuleName::ML3b]
        .into_iter()
        .all(|r| mass_lumped_rule(r).unwrap().weights.iter().all(|w| *w > 0.0))
}

/// DG operators assembled with the orthonormal and the raw monomial basis.
pub fn dg_basis_pair(p: usize) -> &'static (SymbolOperator, SymbolOperator) {
    static CELL: OnceLock<Vec<(SymbolOperator, SymbolOperator)>> = OnceLock::new();
    let all = CELL.get_or_init(|| {
        let mesh = build_disphenoid_cell();
        (1..=3)
            .map(|p| {
                let pen = penalty_inscribed(&mesh, p).unwrap();
                let a = assemble_dg_with_basis(&mesh, &dg_basis(p).unwrap(), &acoustic(), pen.clone()).unwrap();
                let b = assemble_dg_with_basis(&mesh, &dg_monomial_basis(p).unwrap(), &acoustic(), pen).unwrap();
                (SymbolOperator::new(&a).unwrap(), SymbolOperator::new(&b).unwrap())
            })
            .collect()
    });
    &all[p - 1]
}

pub fn basis_invariance_defect(p: usize, kappa: &Vector3<f64>) -> f64 {
    let (a, b) = dg_basis_pair(p);
    spectrum_distance(&a.eigenvalues(kappa).unwrap(), &b.eigenvalues(kappa).unwrap())
}
