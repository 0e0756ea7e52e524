//! Simplex quadrature by conical (collapsed-coordinate) products of
//! Gauss–Jacobi rules.

use nalgebra::{DMatrix, Vector2, Vector3};

use crate::error::{Error, Result};

/// Largest polynomial degree for which rules are generated.
pub const MAX_DEGREE: usize = 30;

/// Gauss–Jacobi rule on `[0, 1]` for the weight `(1 - u)^alpha`, exact for
/// polynomials of degree `2n - 1`.
pub fn gauss_jacobi_unit(n: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let beta = 0.0;
    // Golub–Welsch on the Jacobi matrix of the (alpha, beta) recurrence on [-1, 1].
    let mut jm = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let kf = k as f64;
        let s = 2.0 * kf + alpha + beta;
        let a = if k == 0 {
            (beta - alpha) / (alpha + beta + 2.0)
        } else {
            (beta * beta - alpha * alpha) / (s * (s + 2.0))
        };
        jm[(k, k)] = a;
        if k + 1 < n {
            let m = kf + 1.0;
            let s = 2.0 * m + alpha + beta;
            let b = (4.0 * m * (m + alpha) * (m + beta) * (m + alpha + beta) / (s * s * (s + 1.0) * (s - 1.0))).sqrt();
            jm[(k, k + 1)] = b;
            jm[(k + 1, k)] = b;
        }
    }
    // Total mass of (1-t)^alpha on [-1, 1] for beta = 0.
    let mu0 = 2f64.powf(alpha + 1.0) / (alpha + 1.0);
    let eig = jm.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Map t in [-1, 1] to u = (1 + t)/2: (1-t)^alpha dt = 2^{alpha+1} (1-u)^alpha du.
    let scale = 2f64.powf(-(alpha + 1.0));
    pairs.into_iter().map(|(t, w)| ((1.0 + t) / 2.0, w * scale)).unzip()
}

fn points_for_degree(degree: usize) -> usize {
    (degree + 2) / 2
}

/// Quadrature rule on the reference triangle `(0,0), (1,0), (0,1)`.
#[derive(Clone, Debug)]
pub struct TriangleQuadrature {
    pub degree: usize,
    pub points: Vec<Vector2<f64>>,
    pub weights: Vec<f64>,
}

/// Quadrature rule on the reference tetrahedron `(0,0,0), (1,0,0), (0,1,0), (0,0,1)`.
#[derive(Clone, Debug)]
pub struct TetQuadrature {
    pub degree: usize,
    pub points: Vec<Vector3<f64>>,
    pub weights: Vec<f64>,
}

pub fn triangle_rule(degree: usize) -> Result<TriangleQuadrature> {
    if degree > MAX_DEGREE {
        return Err(Error::UnsupportedDegree { dim: 2, degree });
    }
    let n = points_for_degree(degree);
    let (u1, w1) = gauss_jacobi_unit(n, 1.0);
    let (u2, w2) = gauss_jacobi_unit(n, 0.0);
    let mut points = Vec::with_capacity(n * n);
    let mut weights = Vec::with_capacity(n * n);
    for (a, wa) in u1.iter().zip(&w1) {
        for (b, wb) in u2.iter().zip(&w2) {
            points.push(Vector2::new(*a, b * (1.0 - a)));
            weights.push(wa * wb);
        }
    }
    Ok(TriangleQuadrature {
        degree,
        points,
        weights,
    })
}

pub fn tet_rule(degree: usize) -> Result<TetQuadrature> {
    if degree > MAX_DEGREE {
        return Err(Error::UnsupportedDegree { dim: 3, degree });
    }
    if degree == 0 {
        return Ok(TetQuadrature {
            degree,
            points: vec![Vector3::repeat(0.25)],
            weights: vec![1.0 / 6.0],
        });
    }
    let n = points_for_degree(degree);
    let (u1, w1) = gauss_jacobi_unit(n, 2.0);
    let (u2, w2) = gauss_jacobi_unit(n, 1.0);
    let (u3, w3) = gauss_jacobi_unit(n, 0.0);
    let mut points = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for (a, wa) in u1.iter().zip(&w1) {
        for (b, wb) in u2.iter().zip(&w2) {
            for (c, wc) in u3.iter().zip(&w3) {
                points.push(Vector3::new(*a, b * (1.0 - a), c * (1.0 - a) * (1.0 - b)));
                weights.push(wa * wb * wc);
            }
        }
    }
    Ok(TetQuadrature {
        degree,
        points,
        weights,
    })
}

/// Dimension-generic wrapper returning points as coordinate vectors.
#[derive(Clone, Debug)]
pub struct SimplexQuadrature {
    pub dim: usize,
    pub degree: usize,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

pub fn simplex_quadrature(dim: usize, degree: usize) -> Result<SimplexQuadrature> {
    match dim {
        2 => {
            let q = triangle_rule(degree)?;
            Ok(SimplexQuadrature {
                dim,
                degree,
                points: q.points.iter().map(|p| vec![p[0], p[1]]).collect(),
                weights: q.weights,
            })
        }
        3 => {
            let q = tet_rule(degree)?;
            Ok(SimplexQuadrature {
                dim,
                degree,
                points: q.points.iter().map(|p| vec![p[0], p[1], p[2]]).collect(),
                weights: q.weights,
            })
        }
        _ => Err(Error::UnsupportedDegree { dim, degree }),
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `∫ x^a y^b z^c` over the reference tetrahedron.
pub fn tet_monomial_integral(a: u32, b: u32, c: u32) -> f64 {
    factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
}

/// `∫ x^a y^b` over the reference triangle.
pub fn triangle_monomial_integral(a: u32, b: u32) -> f64 {
    factorial(a) * factorial(b) / factorial(a + b + 2)
}
