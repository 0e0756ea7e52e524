//! Reference-element spaces: mass-lumped nodal rules and DG bases.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::poly::{Poly, PolySet};

/// Volume of the reference tetrahedron.
pub const REF_VOLUME: f64 = 1.0 / 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum RuleName {
    ML1,
    ML2,
    ML3a,
    ML3b,
}

impl RuleName {
    pub const ALL: [RuleName; 4] = [RuleName::ML1, RuleName::ML2, RuleName::ML3a, RuleName::ML3b];

    pub fn degree(self) -> usize {
        match self {
            RuleName::ML1 => 1,
            RuleName::ML2 => 2,
            RuleName::ML3a | RuleName::ML3b => 3,
        }
    }
}

impl fmt::Display for RuleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RuleName::ML1 => "ML1",
            RuleName::ML2 => "ML2",
            RuleName::ML3a => "ML3a",
            RuleName::ML3b => "ML3b",
        };
        f.write_str(s)
    }
}

impl FromStr for RuleName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ml1" => Ok(RuleName::ML1),
            "ml2" => Ok(RuleName::ML2),
            "ml3a" => Ok(RuleName::ML3a),
            "ml3b" => Ok(RuleName::ML3b),
            _ => Err(Error::InvalidParameter(format!("unknown mass-lumped rule '{s}'"))),
        }
    }
}

/// Nodal quadrature rule of a mass-lumped element. Weights are fractions
/// of the element volume.
#[derive(Clone, Debug, Serialize)]
pub struct MassLumpedRule {
    pub name: RuleName,
    pub nodes: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
    pub space_degree: usize,
    pub enriched_dim: usize,
    pub exactness_degree: usize,
}

impl MassLumpedRule {
    /// Reference coordinates `(λ1, λ2, λ3)` of the nodes.
    pub fn reference_points(&self) -> Vec<Vector3<f64>> {
        self.nodes.iter().map(|b| Vector3::new(b[1], b[2], b[3])).collect()
    }

    /// Absolute weights on the reference tetrahedron (summing to 1/6).
    pub fn reference_weights(&self) -> Vec<f64> {
        self.weights.iter().map(|w| w * REF_VOLUME).collect()
    }
}

const ML2_DATA: &str = include_str!("../data/ml2.txt");
const ML3A_DATA: &str = include_str!("../data/ml3a.txt");
const ML3B_DATA: &str = include_str!("../data/ml3b.txt");

fn parse_rule(name: RuleName, text: &str) -> Result<(Vec<[f64; 4]>, Vec<f64>)> {
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::RuleData(format!("{name} line {}: {e}", ln + 1)))?;
        if vals.len() != 5 {
            return Err(Error::RuleData(format!(
                "{name} line {}: expected 5 columns, found {}",
                ln + 1,
                vals.len()
            )));
        }
        nodes.push([vals[0], vals[1], vals[2], vals[3]]);
        weights.push(vals[4]);
    }
    Ok((nodes, weights))
}

pub fn mass_lumped_rule(name: RuleName) -> Result<MassLumpedRule> {
    let (nodes, weights, exactness_degree) = match name {
        RuleName::ML1 => {
            let mut nodes = Vec::new();
            for i in 0..4 {
                let mut b = [0.0; 4];
                b[i] = 1.0;
                nodes.push(b);
            }
            (nodes, vec![0.25; 4], 1)
        }
        RuleName::ML2 => {
            let (n, w) = parse_rule(name, ML2_DATA)?;
            (n, w, 4)
        }
        RuleName::ML3a => {
            let (n, w) = parse_rule(name, ML3A_DATA)?;
            (n, w, 7)
        }
        RuleName::ML3b => {
            let (n, w) = parse_rule(name, ML3B_DATA)?;
            (n, w, 7)
        }
    };
    let enriched_dim = enriched_space(name).len();
    let rule = MassLumpedRule {
        name,
        enriched_dim: nodes.len(),
        nodes,
        weights,
        space_degree: name.degree(),
        exactness_degree,
    };
    if rule.nodes.len() != enriched_dim {
        return Err(Error::RuleData(format!(
            "{name}: {} nodes for a space of dimension {enriched_dim}",
            rule.nodes.len()
        )));
    }
    if rule.weights.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::RuleData(format!("{name}: non-positive weight")));
    }
    Ok(rule)
}

fn product(polys: &[Poly]) -> Poly {
    polys.iter().fold(Poly::constant(1.0), |acc, p| &acc * p)
}

/// Polynomials with all exponents summing to at most `d` in the barycentric
/// coordinates listed, i.e. a spanning set of `P^d` restricted to those
/// coordinates.
fn barycentric_monomials(coords: &[usize], d: usize) -> Vec<Poly> {
    let l: Vec<Poly> = (0..4).map(Poly::barycentric).collect();
    let mut out = Vec::new();
    fn rec(coords: &[usize], d: usize, acc: Poly, l: &[Poly], out: &mut Vec<Poly>) {
        if d == 0 || coords.is_empty() {
            out.push(acc);
            return;
        }
        // Either stop here or multiply by coords[0] and continue.
        rec(&coords[1..], d, acc.clone(), l, out);
        let next = &acc * &l[coords[0]];
        rec(coords, d - 1, next, l, out);
    }
    rec(coords, d, Poly::constant(1.0), &l, &mut out);
    out
}

/// Spanning set of the enriched polynomial space of a mass-lumped element.
/// The set may be linearly dependent; [`independent_subset`] extracts a basis.
pub fn enriched_space(name: RuleName) -> Vec<Poly> {
    let l: Vec<Poly> = (0..4).map(Poly::barycentric).collect();
    let faces: Vec<[usize; 3]> = vec![[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];
    let interior = product(&l);
    let face_bubble = |f: &[usize; 3]| product(&[l[f[0]].clone(), l[f[1]].clone(), l[f[2]].clone()]);
    let mut gens = barycentric_monomials(&[1, 2, 3], name.degree());
    match name {
        RuleName::ML1 => {}
        RuleName::ML2 => {
            for f in &faces {
                let bf = face_bubble(f);
                for &i in f {
                    gens.push(&bf * &l[i]);
                }
            }
            gens.push(interior);
        }
        RuleName::ML3a | RuleName::ML3b => {
            for f in &faces {
                let bf = face_bubble(f);
                for q in barycentric_monomials(f, 2) {
                    // Only the exactly-quadratic products (degree-5 face bubbles).
                    if q.degree() == 2 {
                        gens.push(&bf * &q);
                    }
                }
            }
            for q in barycentric_monomials(&[0, 1, 2, 3], 2) {
                if q.degree() == 2 {
                    gens.push(&interior * &q);
                }
            }
        }
    }
    independent_subset(&gens, 1e-10)
}

/// Greedy selection of linearly independent polynomials (Gram–Schmidt on
/// monomial coefficients).
pub fn independent_subset(polys: &[Poly], tol: f64) -> Vec<Poly> {
    let d = polys.iter().map(Poly::degree).max().unwrap_or(0);
    let mut ortho: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::new();
    for p in polys {
        let mut v = p.to_dense(d);
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for _ in 0..2 {
            for q in &ortho {
                let c: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > tol * norm0.max(1.0) {
            v.iter_mut().for_each(|a| *a /= norm);
            ortho.push(v);
            out.push(p.clone());
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BasisKind {
    NodalMassLumped,
    DgModal,
}

/// Scalar basis on the reference tetrahedron.
#[derive(Clone, Debug)]
pub struct ElementBasis {
    pub kind: BasisKind,
    pub degree: usize,
    pub functions: PolySet,
    pub polys: Vec<Poly>,
    /// Interpolation nodes (nodal kind only), reference coordinates.
    pub nodes: Option<Vec<Vector3<f64>>>,
}

impl ElementBasis {
    pub fn dim(&self) -> usize {
        self.functions.len()
    }

    pub fn values(&self, p: &Vector3<f64>) -> Vec<f64> {
        self.functions.values(p)
    }

    pub fn gradients(&self, p: &Vector3<f64>) -> Vec<Vector3<f64>> {
        self.functions.gradients(p)
    }

    /// Exact reference Gram matrix `∫ φ_i φ_j`.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| (&self.polys[i] * &self.polys[j]).integrate())
    }

    /// 2-norm condition number of the Gram matrix.
    pub fn gram_condition(&self) -> f64 {
        let ev = self.gram().symmetric_eigenvalues();
        let max = ev.iter().cloned().fold(f64::MIN, f64::max);
        let min = ev.iter().cloned().fold(f64::MAX, f64::min);
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

pub fn nodal_basis_from_rule(rule: &MassLumpedRule) -> Result<ElementBasis> {
    let gens = enriched_space(rule.name);
    let pts = rule.reference_points();
    let n = pts.len();
    if gens.len() != n {
        return Err(Error::SingularInterpolation(format!(
            "{}: space dimension {} differs from node count {n}",
            rule.name,
            gens.len()
        )));
    }
    let set = PolySet::new(&gens);
    let vander = DMatrix::from_fn(n, n, |i, j| set.values(&pts[i])[j]);
    let inv = vander
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularInterpolation(rule.name.to_string()))?;
    // Reject nearly singular systems.
    let check = &vander * &inv - DMatrix::<f64>::identity(n, n);
    if check.amax() > 1e-8 {
        return Err(Error::SingularInterpolation(rule.name.to_string()));
    }
    let polys: Vec<Poly> = (0..n)
        .map(|k| {
            gens.iter()
                .enumerate()
                .fold(Poly::zero(), |acc, (j, g)| &acc + &g.scale(inv[(j, k)]))
        })
        .collect();
    Ok(ElementBasis {
        kind: BasisKind::NodalMassLumped,
        degree: rule.space_degree,
        functions: PolySet::new(&polys),
        polys,
        nodes: Some(pts),
    })
}

/// Monomials `x^a y^b z^c` with `a + b + c ≤ p`.
pub fn monomial_space(p: usize) -> Vec<Poly> {
    crate::poly::monomials(p)
        .into_iter()
        .map(|e| Poly::monomial(e, 1.0))
        .collect()
}

/// DG basis of `P^p` orthonormalized so that `∫_ref φ_i φ_j = V_ref δ_ij`;
/// element mass blocks are then `ρ|e| I`.
pub fn dg_basis(p: usize) -> Result<ElementBasis> {
    if !(1..=3).contains(&p) {
        return Err(Error::InvalidParameter(format!("DG degree must be 1, 2 or 3, got {p}")));
    }
    let mono = monomial_space(p);
    let n = mono.len();
    let gram = DMatrix::from_fn(n, n, |i, j| (&mono[i] * &mono[j]).integrate() / REF_VOLUME);
    let chol = gram.cholesky().ok_or(Error::MassNotPositiveDefinite)?;
    let linv = chol.l().try_inverse().ok_or(Error::MassNotPositiveDefinite)?;
    let polys: Vec<Poly> = (0..n)
        .map(|i| (0..=i).fold(Poly::zero(), |acc, j| &acc + &mono[j].scale(linv[(i, j)])))
        .collect();
    Ok(ElementBasis {
        kind: BasisKind::DgModal,
        degree: p,
        functions: PolySet::new(&polys),
        polys,
        nodes: None,
    })
}

/// Raw monomial basis of `P^p`; an alternative DG basis used to check
/// basis independence of the spectra.
pub fn dg_monomial_basis(p: usize) -> Result<ElementBasis> {
    if !(1..=3).contains(&p) {
        return Err(Error::InvalidParameter(format!("DG degree must be 1, 2 or 3, got {p}")));
    }
    let polys = monomial_space(p);
    Ok(ElementBasis {
        kind: BasisKind::DgModal,
        degree: p,
        functions: PolySet::new(&polys),
        polys,
        nodes: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::tet_monomial_integral;

    #[test]
    fn space_dimensions() {
        assert_eq!(enriched_space(RuleName::ML1).len(), 4);
        assert_eq!(enriched_space(RuleName::ML2).len(), 23);
        assert_eq!(enriched_space(RuleName::ML3a).len(), 50);
    }

    #[test]
    fn ml1_rule() {
        let r = mass_lumped_rule(RuleName::ML1).unwrap();
        assert_eq!(r.nodes.len(), 4);
        for (b, w) in r.nodes.iter().zip(r.reference_weights()) {
            assert_eq!(b.iter().filter(|x| **x == 1.0).count(), 1);
            assert!((w - REF_VOLUME / 4.0).abs() < 1e-17);
        }
    }

    #[test]
    fn rule_invariants() {
        for name in RuleName::ALL {
            let r = mass_lumped_rule(name).unwrap();
            assert_eq!(r.nodes.len(), r.enriched_dim);
            assert!(r.weights.iter().all(|w| *w > 0.0));
            let s: f64 = r.reference_weights().iter().sum();
            assert!((s - REF_VOLUME).abs() < 1e-14, "{name}");
            for b in &r.nodes {
                assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-15);
                assert!(b.iter().all(|x| *x >= 0.0));
            }
            let pts = r.reference_points();
            let w = r.reference_weights();
            for e in crate::poly::monomials(r.exactness_degree) {
                let q: f64 = pts
                    .iter()
                    .zip(&w)
                    .map(|(p, w)| w * p[0].powi(e[0] as i32) * p[1].powi(e[1] as i32) * p[2].powi(e[2] as i32))
                    .sum();
                let exact = tet_monomial_integral(e[0], e[1], e[2]);
                assert!((q - exact).abs() < 1e-13 * exact, "{name} {e:?}");
            }
        }
    }

    #[test]
    fn ml3_rules_differ() {
        let a = mass_lumped_rule(RuleName::ML3a).unwrap();
        let b = mass_lumped_rule(RuleName::ML3b).unwrap();
        assert_eq!(a.nodes.len(), b.nodes.len());
        let diff = a
            .nodes
            .iter()
            .zip(&b.nodes)
            .map(|(x, y)| (0..4).map(|k| (x[k] - y[k]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        assert!(diff > 1e-3);
    }

    #[test]
    fn nodal_kronecker_and_partition_of_unity() {
        for name in RuleName::ALL {
            let r = mass_lumped_rule(name).unwrap();
            let basis = nodal_basis_from_rule(&r).unwrap();
            let nodes = basis.nodes.clone().unwrap();
            for (i, x) in nodes.iter().enumerate() {
                let v = basis.values(x);
                for (j, vj) in v.iter().enumerate() {
                    let e = if i == j { 1.0 } else { 0.0 };
                    assert!((vj - e).abs() < 1e-10, "{name} {i} {j} {vj}");
                }
            }
            for x in [Vector3::new(0.1, 0.2, 0.3), Vector3::new(0.6, 0.05, 0.1)] {
                let s: f64 = basis.values(&x).iter().sum();
                assert!((s - 1.0).abs() < 1e-10);
                let g: Vector3<f64> = basis.gradients(&x).iter().sum();
                assert!(g.norm() < 1e-9);
            }
        }
    }

    #[test]
    fn ml1_basis_is_barycentric() {
        let basis = nodal_basis_from_rule(&mass_lumped_rule(RuleName::ML1).unwrap()).unwrap();
        let x = Vector3::new(0.1, 0.2, 0.3);
        let v = basis.values(&x);
        let expect = [0.4, 0.1, 0.2, 0.3];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-6;
        let x = Vector3::new(0.21, 0.17, 0.33);
        let mut bases: Vec<ElementBasis> = RuleName::ALL
            .iter()
            .map(|n| nodal_basis_from_rule(&mass_lumped_rule(*n).unwrap()).unwrap())
            .collect();
        bases.push(dg_basis(3).unwrap());
        for basis in bases {
            let g = basis.gradients(&x);
            for axis in 0..3 {
                let mut e = Vector3::zeros();
                e[axis] = h;
                let vp = basis.values(&(x + e));
                let vm = basis.values(&(x - e));
                for i in 0..basis.dim() {
                    let fd = (vp[i] - vm[i]) / (2.0 * h);
                    assert!((fd - g[i][axis]).abs() < 1e-6 * (1.0 + g[i][axis].abs()));
                }
            }
        }
    }

    #[test]
    fn dg_dimensions_and_orthonormality() {
        for (p, dim) in [(1, 4), (2, 10), (3, 20)] {
            let b = dg_basis(p).unwrap();
            assert_eq!(b.dim(), dim);
            let g = b.gram() / REF_VOLUME;
            assert!((g - DMatrix::<f64>::identity(dim, dim)).amax() < 1e-12);
            let m = dg_monomial_basis(p).unwrap();
            let gm = m.gram();
            assert!((&gm - gm.transpose()).amax() < 1e-15);
            assert!(gm.cholesky().is_some());
            assert!(m.gram_condition().is_finite());
        }
        assert!(dg_basis(0).is_err());
        assert!(dg_basis(4).is_err());
    }
}
