//! Dense trivariate polynomials in reference coordinates `(x, y, z)`.

use std::ops::{Add, Mul, Sub};

use nalgebra::Vector3;

use crate::quadrature::tet_monomial_integral;

/// Largest total degree representable.
pub const MAX_DEGREE: usize = 8;

const SIDE: usize = MAX_DEGREE + 1;

/// Exponent triples of total degree at most `d`, graded then lexicographic.
pub fn monomials(d: usize) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for total in 0..=d as u32 {
        for a in (0..=total).rev() {
            for b in (0..=total - a).rev() {
                out.push([a, b, total - a - b]);
            }
        }
    }
    out
}

fn slot(e: [u32; 3]) -> usize {
    (e[0] as usize * SIDE + e[1] as usize) * SIDE + e[2] as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    coef: Vec<f64>,
}

impl Default for Poly {
    fn default() -> Self {
        Self::zero()
    }
}

impl Poly {
    pub fn zero() -> Self {
        Self {
            coef: vec![0.0; SIDE * SIDE * SIDE],
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::monomial([0, 0, 0], c)
    }

    pub fn monomial(e: [u32; 3], c: f64) -> Self {
        let mut p = Self::zero();
        p.coef[slot(e)] = c;
        p
    }

    /// Barycentric coordinate `λ_i` of the reference tetrahedron
    /// (`λ_0 = 1 - x - y - z`, `λ_k = x_k`).
    pub fn barycentric(i: usize) -> Self {
        match i {
            0 => {
                let mut p = Self::constant(1.0);
                p.coef[slot([1, 0, 0])] = -1.0;
                p.coef[slot([0, 1, 0])] = -1.0;
                p.coef[slot([0, 0, 1])] = -1.0;
                p
            }
            1 => Self::monomial([1, 0, 0], 1.0),
            2 => Self::monomial([0, 1, 0], 1.0),
            3 => Self::monomial([0, 0, 1], 1.0),
            _ => panic!("barycentric index {i} out of range"),
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = ([u32; 3], f64)> + '_ {
        self.coef.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(k, c)| {
            let a = k / (SIDE * SIDE);
            let b = (k / SIDE) % SIDE;
            let cz = k % SIDE;
            ([a as u32, b as u32, cz as u32], *c)
        })
    }

    pub fn coefficient(&self, e: [u32; 3]) -> f64 {
        self.coef[slot(e)]
    }

    pub fn degree(&self) -> usize {
        self.terms()
            .map(|(e, _)| (e[0] + e[1] + e[2]) as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coef: self.coef.iter().map(|c| c * s).collect(),
        }
    }

    pub fn eval(&self, p: &Vector3<f64>) -> f64 {
        self.terms()
            .map(|(e, c)| c * p[0].powi(e[0] as i32) * p[1].powi(e[1] as i32) * p[2].powi(e[2] as i32))
            .sum()
    }

    pub fn derivative(&self, axis: usize) -> Self {
        let mut out = Self::zero();
        for (e, c) in self.terms() {
            if e[axis] > 0 {
                let mut f = e;
                f[axis] -= 1;
                out.coef[slot(f)] += c * e[axis] as f64;
            }
        }
        out
    }

    /// Exact integral over the reference tetrahedron.
    pub fn integrate(&self) -> f64 {
        self.terms()
            .map(|(e, c)| c * tet_monomial_integral(e[0], e[1], e[2]))
            .sum()
    }

    /// Coefficients over `monomials(d)`.
    pub fn to_dense(&self, d: usize) -> Vec<f64> {
        monomials(d).into_iter().map(|e| self.coefficient(e)).collect()
    }

    pub fn from_dense(d: usize, coef: &[f64]) -> Self {
        let mut p = Self::zero();
        for (e, c) in monomials(d).into_iter().zip(coef) {
            p.coef[slot(e)] = *c;
        }
        p
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        Poly {
            coef: self.coef.iter().zip(&rhs.coef).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        Poly {
            coef: self.coef.iter().zip(&rhs.coef).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        let mut out = Poly::zero();
        let rt: Vec<_> = rhs.terms().collect();
        for (ea, ca) in self.terms() {
            for (eb, cb) in &rt {
                let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
                assert!(
                    (e[0] + e[1] + e[2]) as usize <= MAX_DEGREE,
                    "polynomial degree overflow"
                );
                out.coef[slot(e)] += ca * cb;
            }
        }
        out
    }
}

/// A set of polynomials stored as a coefficient matrix over `monomials(d)`,
/// evaluated together.
#[derive(Clone, Debug)]
pub struct PolySet {
    degree: usize,
    exps: Vec<[u32; 3]>,
    /// Row-major `n_funcs × n_monomials`.
    coef: Vec<f64>,
    n_funcs: usize,
    grad: [Vec<f64>; 3],
}

impl PolySet {
    pub fn new(polys: &[Poly]) -> Self {
        let degree = polys.iter().map(Poly::degree).max().unwrap_or(0);
        let exps = monomials(degree);
        let nm = exps.len();
        let mut coef = Vec::with_capacity(polys.len() * nm);
        let mut grad = [
            Vec::with_capacity(polys.len() * nm),
            Vec::with_capacity(polys.len() * nm),
            Vec::with_capacity(polys.len() * nm),
        ];
        for p in polys {
            coef.extend(p.to_dense(degree));
            for (axis, g) in grad.iter_mut().enumerate() {
                g.extend(p.derivative(axis).to_dense(degree));
            }
        }
        Self {
            degree,
            exps,
            coef,
            n_funcs: polys.len(),
            grad,
        }
    }

    pub fn len(&self) -> usize {
        self.n_funcs
    }

    pub fn is_empty(&self) -> bool {
        self.n_funcs == 0
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    fn monomial_values(&self, p: &Vector3<f64>) -> Vec<f64> {
        let d = self.degree as i32;
        let pw = |x: f64| -> Vec<f64> { (0..=d).map(|k| x.powi(k)).collect() };
        let (px, py, pz) = (pw(p[0]), pw(p[1]), pw(p[2]));
        self.exps
            .iter()
            .map(|e| px[e[0] as usize] * py[e[1] as usize] * pz[e[2] as usize])
            .collect()
    }

    fn contract(&self, coef: &[f64], mono: &[f64]) -> Vec<f64> {
        let nm = self.exps.len();
        (0..self.n_funcs)
            .map(|i| coef[i * nm..(i + 1) * nm].iter().zip(mono).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn values(&self, p: &Vector3<f64>) -> Vec<f64> {
        let mono = self.monomial_values(p);
        self.contract(&self.coef, &mono)
    }

    /// Reference gradients, one 3-vector per function.
    pub fn gradients(&self, p: &Vector3<f64>) -> Vec<Vector3<f64>> {
        let mono = self.monomial_values(p);
        let gx = self.contract(&self.grad[0], &mono);
        let gy = self.contract(&self.grad[1], &mono);
        let gz = self.contract(&self.grad[2], &mono);
        (0..self.n_funcs).map(|i| Vector3::new(gx[i], gy[i], gz[i])).collect()
    }
}
