//! Per-wave-vector dispersion and eigenvector errors.

use faer::{c64, Mat};
use nalgebra::{DMatrix, Vector3};

use crate::assembly::{DofLayout, LocalOperatorSet, TetGeometry};
use crate::elements::ElementBasis;
use crate::error::{Error, Result};
use crate::materials::{secondary_amplitude_pair, MaterialKind, MaterialModel};
use crate::quadrature::{tet_rule, MAX_DEGREE as QUAD_MAX_DEGREE};
use crate::symbol::{
    numerical_omega_clamped, spectral_radius_max, stability_polynomial, SymbolEigenSystem, SymbolOperator, TimeScheme,
};

/// Quadrature data for the oscillatory projection integrals of one element.
#[derive(Clone, Debug)]
struct ElementQuadrature {
    points: Vec<Vector3<f64>>,
    /// `w_q |det J| φ_a(ξ_q)`, one row per point.
    weighted_values: DMatrix<f64>,
}

#[derive(Clone, Debug)]
enum ProjectorKind {
    Nodal {
        positions: Vec<Vector3<f64>>,
    },
    Modal {
        elements: Vec<TetGeometry>,
        basis: ElementBasis,
        base_degree: usize,
        /// Rules for degrees `base_degree + 4j`.
        cached: Vec<(usize, Vec<ElementQuadrature>)>,
    },
}

const ESCALATION_STEP: usize = 4;
const ESCALATION_TOL: f64 = 1e-12;

/// Projection of plane waves `a e^{iκ·x}` restricted to `Ω0` onto the cell's
/// degrees of freedom, using the method's own inner product.
#[derive(Clone, Debug)]
pub struct PlaneWaveProjector {
    kind: ProjectorKind,
    m: usize,
    rho: f64,
    max_diameter: f64,
}

fn element_quadrature(elements: &[TetGeometry], basis: &ElementBasis, degree: usize) -> Result<Vec<ElementQuadrature>> {
    let rule = tet_rule(degree)?;
    let vals: Vec<Vec<f64>> = rule.points.iter().map(|p| basis.values(p)).collect();
    Ok(elements
        .iter()
        .map(|g| {
            let points = rule.points.iter().map(|p| g.map(p)).collect();
            let weighted_values = DMatrix::from_fn(rule.points.len(), basis.dim(), |q, a| {
                rule.weights[q] * g.det.abs() * vals[q][a]
            });
            ElementQuadrature {
                points,
                weighted_values,
            }
        })
        .collect())
}

impl PlaneWaveProjector {
    pub fn new(ops: &LocalOperatorSet, material: &MaterialModel) -> Result<Self> {
        let kind = match &ops.layout {
            DofLayout::Nodal { positions } => ProjectorKind::Nodal {
                positions: positions.clone(),
            },
            DofLayout::Modal { elements, basis } => {
                let base_degree = 2 * basis.degree + 6;
                let cached = (base_degree..=QUAD_MAX_DEGREE)
                    .step_by(ESCALATION_STEP)
                    .map(|d| Ok((d, element_quadrature(elements, basis, d)?)))
                    .collect::<Result<_>>()?;
                ProjectorKind::Modal {
                    cached,
                    elements: elements.clone(),
                    basis: basis.clone(),
                    base_degree,
                }
            }
        };
        Ok(Self {
            kind,
            m: ops.m,
            rho: material.rho(),
            max_diameter: ops.max_diameter,
        })
    }

    /// Quadrature degree used for `κ`: `max(2p+6, ⌈3|κ|h⌉)`.
    pub fn quadrature_degree(&self, kappa: &Vector3<f64>) -> usize {
        match &self.kind {
            ProjectorKind::Nodal { .. } => 0,
            ProjectorKind::Modal { base_degree, .. } => {
                let need = (3.0 * kappa.norm() * self.max_diameter).ceil() as usize;
                (*base_degree).max(need)
            }
        }
    }

    /// Right-hand side `b_i = (ρ a e^{iκ·x}, w_i)` for DG, evaluated with a
    /// given quadrature degree.
    pub fn load_vector(&self, kappa: &Vector3<f64>, amplitude: &[f64], degree: usize) -> Result<Vec<c64>> {
        let (elements, basis, cached) = match &self.kind {
            ProjectorKind::Modal {
                elements,
                basis,
                cached,
                ..
            } => (elements, basis, cached),
            ProjectorKind::Nodal { .. } => {
                return Err(Error::InvalidParameter(
                    "load vectors are only defined for modal layouts".into(),
                ))
            }
        };
        let degree = degree.min(QUAD_MAX_DEGREE);
        let fresh;
        let quad = match cached.iter().find(|(d, _)| *d == degree) {
            Some((_, q)) => q,
            None => {
                fresh = element_quadrature(elements, basis, degree)?;
                &fresh
            }
        };
        let nb = basis.dim();
        let m = self.m;
        let mut b = vec![c64::new(0.0, 0.0); elements.len() * nb * m];
        for (t, eq) in quad.iter().enumerate() {
            for (q, x) in eq.points.iter().enumerate() {
                let (s, c) = kappa.dot(x).sin_cos();
                let ph = c64::new(c, s) * self.rho;
                for a in 0..nb {
                    let w = eq.weighted_values[(q, a)];
                    for i in 0..m {
                        b[(t * nb + a) * m + i] += ph * (w * amplitude[i]);
                    }
                }
            }
        }
        Ok(b)
    }

    /// Load vector at the starting degree, raised in steps of 4 until two
    /// successive degrees agree. Returns the degree used and the vector.
    pub fn converged_load_vector(&self, kappa: &Vector3<f64>, amplitude: &[f64]) -> Result<(usize, Vec<c64>)> {
        let mut q = self.quadrature_degree(kappa).min(QUAD_MAX_DEGREE);
        let mut b = self.load_vector(kappa, amplitude, q)?;
        while q + ESCALATION_STEP <= QUAD_MAX_DEGREE {
            let next = self.load_vector(kappa, amplitude, q + ESCALATION_STEP)?;
            let scale = next.iter().map(|x| x.norm()).fold(0.0, f64::max);
            let diff = b.iter().zip(&next).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            q += ESCALATION_STEP;
            b = next;
            if diff <= ESCALATION_TOL * scale {
                break;
            }
        }
        Ok((q, b))
    }

    /// Coefficients `ū` with `M0 ū = b`.
    pub fn project(&self, op: &SymbolOperator, kappa: &Vector3<f64>, amplitude: &[f64]) -> Result<Vec<c64>> {
        if amplitude.len() != self.m {
            return Err(Error::InvalidParameter("amplitude length must equal m".into()));
        }
        match &self.kind {
            ProjectorKind::Nodal { positions } => {
                let mut u = Vec::with_capacity(positions.len() * self.m);
                for x in positions {
                    let (s, c) = kappa.dot(x).sin_cos();
                    for a in amplitude {
                        u.push(c64::new(c, s) * *a);
                    }
                }
                Ok(u)
            }
            ProjectorKind::Modal { .. } => {
                let (_, b) = self.converged_load_vector(kappa, amplitude)?;
                Ok(op.mass_solve(&b))
            }
        }
    }
}

/// Errors at one wave vector.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct KappaErrors {
    pub e_disp: f64,
    pub e_vec: f64,
}

/// Symbol, scheme and projector for one method, material and mesh.
#[derive(Clone, Debug)]
pub struct DispersionAnalyzer {
    pub op: SymbolOperator,
    pub projector: PlaneWaveProjector,
    pub material: MaterialModel,
    pub scheme: TimeScheme,
    /// Number of physical modes matched: 1 (acoustic) or 2 (elastic S-waves).
    matches: usize,
}

/// Default grid size for the `s_max` search.
pub const DEFAULT_SMAX_GRID: usize = 17;
pub const DEFAULT_SMAX_TOL: f64 = 1e-6;

/// Above this size only the eigenpairs near the physical branch are computed.
pub const PARTIAL_EIGEN_THRESHOLD: usize = 200;

impl DispersionAnalyzer {
    pub fn new(ops: &LocalOperatorSet, material: &MaterialModel, scheme: TimeScheme) -> Result<Self> {
        if ops.m != material.m() {
            return Err(Error::InvalidParameter(
                "operator and material dimensions differ".into(),
            ));
        }
        Ok(Self {
            op: SymbolOperator::new(ops)?,
            projector: PlaneWaveProjector::new(ops, material)?,
            material: material.clone(),
            scheme,
            matches: match material.kind() {
                MaterialKind::Acoustic => 1,
                MaterialKind::Elastic => 2,
            },
        })
    }

    /// Builds the analyzer with the maximal stable step, `K = p`.
    pub fn with_stable_step(ops: &LocalOperatorSet, material: &MaterialModel, grid: usize, tol: f64) -> Result<Self> {
        let op = SymbolOperator::new(ops)?;
        let smax = spectral_radius_max(&op, grid, tol)?;
        let scheme = TimeScheme::new(ops.method.degree(), smax.s_max)?;
        Self::new(ops, material, scheme)
    }

    pub fn speed(&self) -> f64 {
        self.material.reference_speed()
    }

    fn check_kappa(&self, kappa: &Vector3<f64>) -> Result<f64> {
        let k = kappa.norm();
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::ZeroWaveVector);
        }
        if self.speed() * k * self.scheme.dt >= std::f64::consts::PI {
            return Err(Error::Unresolved(format!(
                "c|κ|dt = {:.3} ≥ π; the wavelength is below the time-step resolution",
                self.speed() * k * self.scheme.dt
            )));
        }
        Ok(k)
    }

    /// `(index, |c - c_h|/c)` ordered by mismatch.
    fn ranked(&self, eigenvalues: &[f64], k: f64) -> Vec<(usize, f64)> {
        let c = self.speed();
        let mut r: Vec<(usize, f64)> = eigenvalues
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let ch = numerical_omega_clamped(s.max(0.0), self.scheme.dt, self.scheme.k) / k;
                (i, (c - ch).abs() / c)
            })
            .collect();
        r.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        r
    }

    /// Symbol eigenvalues `s` with `ω_h(s) = c|κ|`: one per monotone branch
    /// of the stability polynomial.
    fn exact_preimages(&self, k: f64) -> Vec<f64> {
        let dt = self.scheme.dt;
        let target = (self.speed() * k * dt).cos();
        let branches: Vec<(f64, f64)> = match self.scheme.k {
            2 => vec![(0.0, 6.0), (6.0, self.scheme.ck)],
            _ => vec![(0.0, self.scheme.ck)],
        };
        branches
            .into_iter()
            .filter_map(|(a, b)| {
                let (pa, pb) = (
                    stability_polynomial(a, self.scheme.k) - target,
                    stability_polynomial(b, self.scheme.k) - target,
                );
                if pa * pb > 0.0 {
                    return None;
                }
                let (mut lo, mut hi) = (a, b);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if (stability_polynomial(mid, self.scheme.k) - target) * pa > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Some(0.5 * (lo + hi) / (dt * dt))
            })
            .collect()
    }

    /// All eigenpairs for small systems; otherwise those closest to the
    /// exact symbol values on each branch, which include every mode that
    /// can match the exact speed.
    fn candidate_modes(&self, kappa: &Vector3<f64>, k: f64) -> Result<SymbolEigenSystem> {
        if self.op.n0() <= PARTIAL_EIGEN_THRESHOLD {
            return self.op.eigensystem(kappa);
        }
        let shifts = self.exact_preimages(k);
        self.op.nearest_eigensystem(kappa, &shifts, self.matches + 2)
    }

    /// `e_disp(κ)`; eigenvalues only.
    pub fn dispersion_error(&self, kappa: &Vector3<f64>) -> Result<f64> {
        let k = self.check_kappa(kappa)?;
        let ev = self.op.eigenvalues(kappa)?;
        let r = self.ranked(&ev, k);
        Ok(r[(self.matches - 1).min(r.len() - 1)].1)
    }

    fn amplitudes(&self, kappa: &Vector3<f64>) -> Result<Vec<Vec<f64>>> {
        Ok(match self.material.kind() {
            MaterialKind::Acoustic => vec![vec![1.0]],
            MaterialKind::Elastic => {
                let (a1, a2) = secondary_amplitude_pair(kappa)?;
                vec![a1.iter().cloned().collect(), a2.iter().cloned().collect()]
            }
        })
    }

    /// Both errors from one eigendecomposition.
    pub fn errors(&self, kappa: &Vector3<f64>) -> Result<KappaErrors> {
        self.errors_with(kappa, false)
    }

    /// As [`Self::errors`], with the matched eigenvalues recomputed by a
    /// compensated Rayleigh–Ritz step. Lowers the roundoff floor of `e_disp`
    /// for well-resolved waves.
    pub fn errors_refined(&self, kappa: &Vector3<f64>) -> Result<KappaErrors> {
        self.errors_with(kappa, true)
    }

    fn errors_with(&self, kappa: &Vector3<f64>, refine: bool) -> Result<KappaErrors> {
        let k = self.check_kappa(kappa)?;
        let sys = self.candidate_modes(kappa, k)?;
        let ranked = self.ranked(&sys.eigenvalues, k);
        let n = self.op.n0();
        let projections: Vec<Vec<c64>> = self
            .amplitudes(kappa)?
            .iter()
            .map(|a| self.projector.project(&self.op, kappa, a))
            .collect::<Result<_>>()?;
        let column = |j: usize| -> Vec<c64> { (0..n).map(|i| sys.vectors[(i, j)]).collect() };
        let chosen = self.select_modes(&ranked, &projections, &sys.vectors);
        let modes: Vec<Vec<c64>> = chosen.iter().map(|j| column(*j)).collect();
        let e_disp = if refine {
            let s = self.op.refined_eigenvalues(kappa, &modes)?;
            self.ranked(&s, k).iter().map(|r| r.1).fold(0.0, f64::max)
        } else {
            chosen
                .iter()
                .map(|j| ranked.iter().find(|r| r.0 == *j).expect("ranked mode").1)
                .fold(0.0, f64::max)
        };
        let e_vec = if modes.len() >= n {
            0.0
        } else {
            self.subspace_error(&projections, &modes)?
        };
        Ok(KappaErrors { e_disp, e_vec })
    }

    /// `e_vec(κ)` alone.
    pub fn eigenvector_error(&self, kappa: &Vector3<f64>) -> Result<f64> {
        Ok(self.errors(kappa)?.e_vec)
    }

    /// The `matches` best-matching modes, with exact ties in mismatch broken
    /// by the larger projection overlap.
    fn select_modes(&self, ranked: &[(usize, f64)], projections: &[Vec<c64>], vectors: &Mat<c64>) -> Vec<usize> {
        let need = self.matches.min(ranked.len());
        let cutoff = ranked[need - 1].1 + 1e-12;
        let tied_beyond = ranked.get(need).map(|r| r.1 <= cutoff).unwrap_or(false);
        if !tied_beyond {
            return ranked[..need].iter().map(|r| r.0).collect();
        }
        let n = self.op.n0();
        let overlap = |j: usize| -> f64 {
            let u: Vec<c64> = (0..n).map(|i| vectors[(i, j)]).collect();
            projections.iter().map(|p| self.op.mass_inner(&u, p).norm_sqr()).sum()
        };
        let mut sure: Vec<usize> = ranked
            .iter()
            .take_while(|r| r.1 < ranked[need - 1].1 - 1e-12)
            .map(|r| r.0)
            .collect();
        let lo = ranked[need - 1].1 - 1e-12;
        let mut tied: Vec<(usize, f64)> = ranked
            .iter()
            .filter(|r| r.1 >= lo && r.1 <= cutoff)
            .map(|r| (r.0, overlap(r.0)))
            .collect();
        tied.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for (j, _) in tied {
            if sure.len() == need {
                break;
            }
            sure.push(j);
        }
        sure
    }

    /// `√σ_max(B⁻¹R)` for the projections against `span(modes)`; for one
    /// projection this is the relative `M0` residual.
    fn subspace_error(&self, projections: &[Vec<c64>], modes: &[Vec<c64>]) -> Result<f64> {
        let residuals: Vec<Vec<c64>> = projections
            .iter()
            .map(|u| {
                let mut r = u.clone();
                for v in modes {
                    let beta = self.op.mass_inner(v, u);
                    for (ri, vi) in r.iter_mut().zip(v) {
                        *ri -= beta * vi;
                    }
                }
                r
            })
            .collect();
        let p = projections.len();
        let gram = |x: &[Vec<c64>]| -> Vec<Vec<c64>> {
            (0..p)
                .map(|i| (0..p).map(|j| self.op.mass_inner(&x[i], &x[j])).collect())
                .collect()
        };
        let b = gram(projections);
        let r = gram(&residuals);
        match p {
            1 => {
                if !(b[0][0].re > 0.0) {
                    return Err(Error::Unresolved("plane-wave projection vanishes".into()));
                }
                Ok((r[0][0].re.max(0.0) / b[0][0].re).sqrt())
            }
            2 => Ok(largest_generalized_2x2(&b, &r)?.max(0.0).sqrt()),
            _ => Err(Error::InvalidParameter("at most two projections supported".into())),
        }
    }
}

/// Largest eigenvalue of `B⁻¹R` for 2×2 Hermitian `B` (positive definite)
/// and `R`.
fn largest_generalized_2x2(b: &[Vec<c64>], r: &[Vec<c64>]) -> Result<f64> {
    let l11 = b[0][0].re.sqrt();
    if !(l11 > 0.0) {
        return Err(Error::Unresolved("singular projection Gram matrix".into()));
    }
    let l21 = b[1][0] / l11;
    let d = b[1][1].re - l21.norm_sqr();
    if !(d > 1e-14 * b[1][1].re.abs()) {
        return Err(Error::Unresolved("singular projection Gram matrix".into()));
    }
    let l22 = d.sqrt();
    // C = L⁻¹ R L⁻ᴴ with L = [[l11, 0], [l21, l22]].
    let inv = [
        [c64::new(1.0 / l11, 0.0), c64::new(0.0, 0.0)],
        [-l21 / (l11 * l22), c64::new(1.0 / l22, 0.0)],
    ];
    let mut c = [[c64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut s = c64::new(0.0, 0.0);
            for k in 0..2 {
                for l in 0..2 {
                    s += inv[i][k] * r[k][l] * inv[j][l].conj();
                }
            }
            c[i][j] = s;
        }
    }
    let a = c[0][0].re;
    let dd = c[1][1].re;
    let off = c[0][1].norm();
    Ok(0.5 * (a + dd) + (0.25 * (a - dd).powi(2) + off * off).sqrt())
}
