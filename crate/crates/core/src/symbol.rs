//! Fourier symbol of the cell operators, its Hermitian eigenproblem, and the
//! Lax–Wendroff time-stepping quantities derived from it.

use faer::linalg::solvers::Solve;
use faer::{c64, Col, Mat, Side};
use nalgebra::{DMatrix, Vector3};
use rayon::prelude::*;

use crate::assembly::{LocalOperatorSet, MassMatrix};
use crate::error::{Error, Result};
use crate::mesh::{shift_vec, LatticeTransform};
use crate::optimize::nelder_mead;

/// Dense solves are used below this size; Lanczos above it for `λ_max`.
const LANCZOS_THRESHOLD: usize = 200;

/// `Σ_{k=0}^{K} (-x)^k / (2k)!`.
pub fn stability_polynomial(x: f64, k: usize) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..=k {
        term *= -x / ((2 * j - 1) as f64 * (2 * j) as f64);
        sum += term;
    }
    sum
}

/// `inf{x ≥ 0 : |Σ_{k≤K} (-x)^k/(2k)!| > 1}`.
pub fn compute_ck(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    let outside = |x: f64| stability_polynomial(x, k).abs() > 1.0;
    let step = 1e-3;
    let mut lo = 0.0;
    let mut hi = step;
    while !outside(hi) {
        lo = hi;
        hi += step;
        if hi > 1e4 {
            return Err(Error::InvalidParameter(format!("no stability bound for K = {k}")));
        }
    }
    while hi - lo > 1e-13 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if outside(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

pub fn stable_dt(s_max: f64, k: usize) -> Result<f64> {
    if !(s_max > 0.0) {
        return Err(Error::InvalidParameter("s_max must be positive".into()));
    }
    Ok((compute_ck(k)? / s_max).sqrt())
}

/// `1 - P_K(x)` summed without cancellation near `x = 0`.
fn one_minus_stability_polynomial(x: f64, k: usize) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for j in 1..=k {
        term *= -x / ((2 * j - 1) as f64 * (2 * j) as f64);
        sum -= term;
    }
    sum
}

/// `arccos` of `1 - d`, accurate for small `d`.
fn phase_from_defect(d: f64) -> f64 {
    let d = d.clamp(0.0, 2.0);
    if d <= 1.0 {
        2.0 * (0.5 * d).sqrt().asin()
    } else {
        (1.0 - d).acos()
    }
}

/// `arccos(Σ (-dt² s)^k/(2k)!) / dt`, nonnegative branch.
pub fn numerical_omega(s: f64, dt: f64, k: usize) -> Result<f64> {
    let arg = stability_polynomial(dt * dt * s, k);
    if !(arg.abs() <= 1.0 + 1e-9) {
        return Err(Error::Unstable(arg));
    }
    Ok(phase_from_defect(one_minus_stability_polynomial(dt * dt * s, k)) / dt)
}

/// Like [`numerical_omega`] but maps out-of-range arguments to the nearest
/// end of `[0, π/dt]`; used when matching modes, where only the physical
/// branch matters.
pub(crate) fn numerical_omega_clamped(s: f64, dt: f64, k: usize) -> f64 {
    phase_from_defect(one_minus_stability_polynomial(dt * dt * s, k)) / dt
}

/// Lax–Wendroff scheme with `K` terms and the maximal stable step.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct TimeScheme {
    pub k: usize,
    pub ck: f64,
    pub dt: f64,
    pub s_max: f64,
}

impl TimeScheme {
    pub fn new(k: usize, s_max: f64) -> Result<Self> {
        let ck = compute_ck(k)?;
        let dt = stable_dt(s_max, k)?;
        Ok(Self { k, ck, dt, s_max })
    }

    pub fn with_dt(k: usize, s_max: f64, dt: f64) -> Result<Self> {
        Ok(Self {
            k,
            ck: compute_ck(k)?,
            dt,
            s_max,
        })
    }

    pub fn omega(&self, s: f64) -> Result<f64> {
        numerical_omega(s, self.dt, self.k)
    }
}

#[derive(Clone, Debug)]
enum MassFactor {
    /// `M0^{-1/2}` diagonal.
    Diagonal(Vec<f64>),
    /// `L^{-1}` with `M0 = L Lᵀ`.
    Dense(DMatrix<f64>),
}

/// Mass-scaled symbol `H(κ) = L^{-1} A(κ) L^{-ᴴ}` with blocks pre-scaled.
#[derive(Clone, Debug)]
pub struct SymbolOperator {
    n0: usize,
    m: usize,
    /// Physical lattice vectors `T·Δk`.
    offsets: Vec<Vector3<f64>>,
    raw: Vec<DMatrix<f64>>,
    scaled: Vec<DMatrix<f64>>,
    factor: MassFactor,
    mass: MassMatrix,
    transform: LatticeTransform,
}

/// Eigenpairs of `A(κ) U = s M0 U`, sorted by `s`, with `M0`-orthonormal `U`.
#[derive(Clone, Debug)]
pub struct SymbolEigenSystem {
    pub kappa: Vector3<f64>,
    pub eigenvalues: Vec<f64>,
    pub vectors: Mat<c64>,
}

impl SymbolOperator {
    pub fn new(ops: &LocalOperatorSet) -> Result<Self> {
        let n0 = ops.n0;
        let factor = match &ops.mass {
            MassMatrix::Diagonal(d) => {
                if d.iter().any(|x| !(*x > 0.0)) {
                    return Err(Error::MassNotPositiveDefinite);
                }
                MassFactor::Diagonal(d.iter().map(|x| 1.0 / x.sqrt()).collect())
            }
            MassMatrix::Dense(m) => {
                let chol = m.clone().cholesky().ok_or(Error::MassNotPositiveDefinite)?;
                let linv = chol.l().try_inverse().ok_or(Error::MassNotPositiveDefinite)?;
                MassFactor::Dense(linv)
            }
        };
        let mut offsets = Vec::new();
        let mut raw = Vec::new();
        let mut scaled = Vec::new();
        for (s, b) in &ops.blocks {
            offsets.push(ops.transform.matrix() * shift_vec(*s));
            let sb = match &factor {
                MassFactor::Diagonal(d) => DMatrix::from_fn(n0, n0, |i, j| d[i] * b[(i, j)] * d[j]),
                MassFactor::Dense(l) => l * b * l.transpose(),
            };
            raw.push(b.clone());
            scaled.push(sb);
        }
        Ok(Self {
            n0,
            m: ops.m,
            offsets,
            raw,
            scaled,
            factor,
            mass: ops.mass.clone(),
            transform: ops.transform.clone(),
        })
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn transform(&self) -> &LatticeTransform {
        &self.transform
    }

    fn combine(&self, blocks: &[DMatrix<f64>], kappa: &Vector3<f64>) -> Mat<c64> {
        let n = self.n0;
        let mut re = vec![0.0; n * n];
        let mut im = vec![0.0; n * n];
        for (b, x) in blocks.iter().zip(&self.offsets) {
            let phase = kappa.dot(x);
            let (s, c) = phase.sin_cos();
            for ((r, i), v) in re.iter_mut().zip(im.iter_mut()).zip(b.as_slice()) {
                *r += c * v;
                *i += s * v;
            }
        }
        // nalgebra storage is column-major.
        Mat::from_fn(n, n, |i, j| c64::new(re[j * n + i], im[j * n + i]))
    }

    /// `A(κ) = Σ_Δk e^{iκ·TΔk} A_Δk`.
    pub fn symbol_matrix(&self, kappa: &Vector3<f64>) -> Mat<c64> {
        self.combine(&self.raw, kappa)
    }

    /// The mass-scaled Hermitian symbol.
    pub fn scaled_symbol(&self, kappa: &Vector3<f64>) -> Mat<c64> {
        self.combine(&self.scaled, kappa)
    }

    pub fn eigenvalues(&self, kappa: &Vector3<f64>) -> Result<Vec<f64>> {
        let h = self.scaled_symbol(kappa);
        let mut v = h
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        v.sort_by(|a, b| a.total_cmp(b));
        Ok(v)
    }

    pub fn eigensystem(&self, kappa: &Vector3<f64>) -> Result<SymbolEigenSystem> {
        let h = self.scaled_symbol(kappa);
        let evd = h
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let n = self.n0;
        let s = evd.S().column_vector();
        let y = evd.U();
        let eigenvalues: Vec<f64> = (0..n).map(|i| s[i].re).collect();
        Ok(SymbolEigenSystem {
            kappa: *kappa,
            eigenvalues,
            // U = L^{-ᴴ} Y
            vectors: self.to_mass_orthonormal(&y.to_owned()),
        })
    }

    fn to_mass_orthonormal(&self, y: &Mat<c64>) -> Mat<c64> {
        let (n, c) = (y.nrows(), y.ncols());
        match &self.factor {
            MassFactor::Diagonal(d) => Mat::from_fn(n, c, |i, j| y[(i, j)] * d[i]),
            MassFactor::Dense(l) => {
                let lt = Mat::from_fn(n, n, |i, j| c64::new(l[(j, i)], 0.0));
                &lt * y
            }
        }
    }

    /// Eigenpairs closest to the given shifts, `count` per shift, by block
    /// shift-and-invert iteration with Rayleigh–Ritz. Falls back to the full
    /// eigensystem when the system is small.
    pub fn nearest_eigensystem(&self, kappa: &Vector3<f64>, shifts: &[f64], count: usize) -> Result<SymbolEigenSystem> {
        let n = self.n0;
        let block = count + 4;
        if shifts.is_empty() || block * 2 >= n {
            return self.eigensystem(kappa);
        }
        let h = self.scaled_symbol(kappa);
        let hnorm = h.norm_l2();
        let tol = 1e-12 * hnorm;
        let mut collected: Vec<Col<c64>> = Vec::new();
        for (si, &sigma) in shifts.iter().enumerate() {
            let shifted = Mat::from_fn(n, n, |i, j| {
                if i == j {
                    h[(i, j)] - c64::new(sigma, 0.0)
                } else {
                    h[(i, j)]
                }
            });
            let lu = shifted.partial_piv_lu();
            let mut x = Mat::from_fn(n, block, |i, j| {
                let t = (i * block + j + 1 + 7919 * si) as f64;
                c64::new((t * 0.754877666).fract() - 0.5, (t * 0.569840291).fract() - 0.5)
            });
            let mut converged = false;
            for _ in 0..40 {
                let y = lu.solve(&x);
                if y.as_ref().has_nan() || !y.as_ref().is_all_finite() {
                    return self.eigensystem(kappa);
                }
                let q = y.qr().compute_thin_Q();
                let hq = &h * &q;
                let t = q.adjoint() * &hq;
                let evd = t
                    .self_adjoint_eigen(Side::Lower)
                    .map_err(|e| Error::Eigen(format!("{e:?}")))?;
                let theta: Vec<f64> = (0..block).map(|i| evd.S().column_vector()[i].re).collect();
                x = &q * evd.U();
                let hx = &hq * evd.U();
                let mut order: Vec<usize> = (0..block).collect();
                order.sort_by(|a, b| (theta[*a] - sigma).abs().total_cmp(&(theta[*b] - sigma).abs()));
                converged = order[..count].iter().all(|&j| {
                    let r: f64 = (0..n)
                        .map(|i| (hx[(i, j)] - x[(i, j)] * theta[j]).norm_sqr())
                        .sum::<f64>()
                        .sqrt();
                    r <= tol
                });
                if converged {
                    for &j in &order[..count] {
                        collected.push(Col::from_fn(n, |i| x[(i, j)]));
                    }
                    break;
                }
            }
            if !converged {
                return self.eigensystem(kappa);
            }
        }
        // Orthonormal basis of everything found, then one Rayleigh–Ritz step.
        let mut basis: Vec<Col<c64>> = Vec::new();
        for v in collected {
            let mut w = v;
            for _ in 0..2 {
                for b in &basis {
                    let c = b.adjoint() * &w;
                    w -= faer::Scale(c) * b;
                }
            }
            let nw = w.norm_l2();
            if nw > 1e-8 {
                basis.push(Col::from_fn(n, |i| w[i] / nw));
            }
        }
        let c = basis.len();
        let q = Mat::from_fn(n, c, |i, j| basis[j][i]);
        let t = q.adjoint() * (&h * &q);
        let evd = t
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let eigenvalues: Vec<f64> = (0..c).map(|i| evd.S().column_vector()[i].re).collect();
        let y = &q * evd.U();
        Ok(SymbolEigenSystem {
            kappa: *kappa,
            eigenvalues,
            vectors: self.to_mass_orthonormal(&y),
        })
    }

    /// Eigenvalues of the pencil `(Uᴴ A(κ) U, Uᴴ M0 U)` for one or two
    /// approximate eigenvectors, with `Uᴴ A_Δk U` accumulated in
    /// double-double arithmetic and `A(κ) = Σ A_Δk + Σ (e^{iφ} - 1) A_Δk`.
    /// This removes most of the cancellation between blocks for smooth modes.
    pub fn refined_eigenvalues(&self, kappa: &Vector3<f64>, modes: &[Vec<c64>]) -> Result<Vec<f64>> {
        let k = modes.len();
        if k == 0 || k > 2 {
            return Err(Error::InvalidParameter("refinement takes one or two vectors".into()));
        }
        let n = self.n0;
        let mut base = vec![vec![[Dd::default(), Dd::default()]; k]; k];
        let mut correction = vec![vec![c64::new(0.0, 0.0); k]; k];
        for (b, x) in self.raw.iter().zip(&self.offsets) {
            let phi = kappa.dot(x);
            let half = 0.5 * phi;
            let dphase = c64::new(-2.0 * half.sin().powi(2), phi.sin());
            // B u_b in double-double, real and imaginary parts.
            let bu: Vec<Vec<[Dd; 2]>> = modes
                .iter()
                .map(|u| {
                    let mut acc = vec![[Dd::default(), Dd::default()]; n];
                    for j in 0..n {
                        let (ur, ui) = (u[j].re, u[j].im);
                        for i in 0..n {
                            let bij = b[(i, j)];
                            acc[i][0].add_prod(bij, ur);
                            acc[i][1].add_prod(bij, ui);
                        }
                    }
                    acc
                })
                .collect();
            for a in 0..k {
                for c in 0..k {
                    let mut re = Dd::default();
                    let mut im = Dd::default();
                    for i in 0..n {
                        let (yr, yi) = (modes[a][i].re, modes[a][i].im);
                        let [vr, vi] = bu[c][i];
                        // conj(y) v
                        re.add_dd_prod(yr, vr);
                        re.add_dd_prod(yi, vi);
                        im.add_dd_prod(yr, vi);
                        im.add_dd_prod(-yi, vr);
                    }
                    base[a][c][0].add_dd(re);
                    base[a][c][1].add_dd(im);
                    correction[a][c] += dphase * c64::new(re.value(), im.value());
                }
            }
        }
        let g: Vec<Vec<c64>> = (0..k)
            .map(|a| {
                (0..k)
                    .map(|c| c64::new(base[a][c][0].value(), base[a][c][1].value()) + correction[a][c])
                    .collect()
            })
            .collect();
        let m: Vec<Vec<c64>> = (0..k)
            .map(|a| (0..k).map(|c| self.mass_inner(&modes[a], &modes[c])).collect())
            .collect();
        if k == 1 {
            return Ok(vec![g[0][0].re / m[0][0].re]);
        }
        // C = L⁻¹ G L⁻ᴴ with M = L Lᴴ, then the closed form for a 2×2
        // Hermitian matrix, which stays accurate for nearly equal eigenvalues.
        let l00 = m[0][0].re.sqrt();
        let l10 = m[1][0] / l00;
        let l11 = (m[1][1].re - l10.norm_sqr()).sqrt();
        let x0 = [g[0][0] / l00, g[0][1] / l00];
        let x1 = [(g[1][0] - l10 * x0[0]) / l11, (g[1][1] - l10 * x0[1]) / l11];
        let c00 = x0[0] / l00;
        let c10 = x1[0] / l00;
        let c11 = (x1[1] - l10.conj() * c10) / l11;
        let (a, d) = (c00.re, c11.re);
        let mean = 0.5 * (a + d);
        let r = (0.5 * (a - d)).hypot(c10.norm());
        Ok(vec![mean - r, mean + r])
    }

    /// `⟨u, v⟩_{M0} = uᴴ M0 v`.
    pub fn mass_inner(&self, u: &[c64], v: &[c64]) -> c64 {
        match &self.mass {
            MassMatrix::Diagonal(d) => u.iter().zip(v).zip(d).map(|((a, b), w)| a.conj() * b * *w).sum(),
            MassMatrix::Dense(m) => {
                let mut acc = c64::new(0.0, 0.0);
                for j in 0..v.len() {
                    let mut mv = c64::new(0.0, 0.0);
                    for i in 0..u.len() {
                        mv += u[i].conj() * m[(i, j)];
                    }
                    acc += mv * v[j];
                }
                acc
            }
        }
    }

    /// Solves `M0 x = b`.
    pub fn mass_solve(&self, b: &[c64]) -> Vec<c64> {
        match &self.mass {
            MassMatrix::Diagonal(d) => b.iter().zip(d).map(|(x, w)| *x / *w).collect(),
            MassMatrix::Dense(_) => {
                let l = match &self.factor {
                    MassFactor::Dense(l) => l,
                    MassFactor::Diagonal(_) => unreachable!(),
                };
                // x = L^{-ᵀ} L^{-1} b
                let n = b.len();
                let y: Vec<c64> = (0..n).map(|i| (0..n).map(|k| b[k] * l[(i, k)]).sum()).collect();
                (0..n).map(|i| (0..n).map(|k| y[k] * l[(k, i)]).sum()).collect()
            }
        }
    }

    /// Largest eigenvalue of the symbol at `κ`.
    pub fn max_eigenvalue(&self, kappa: &Vector3<f64>) -> Result<f64> {
        if self.n0 < LANCZOS_THRESHOLD {
            return Ok(*self.eigenvalues(kappa)?.last().expect("nonempty"));
        }
        Ok(lanczos_max(&self.scaled_symbol(kappa), 1e-12))
    }

    /// `λ_max` at `κ = T^{-t} ζ`.
    pub fn max_eigenvalue_zeta(&self, zeta: &Vector3<f64>) -> Result<f64> {
        self.max_eigenvalue(&self.transform.wave_vector(zeta))
    }
}

/// Unevaluated sum `hi + lo` used for compensated accumulation.
#[derive(Clone, Copy, Debug, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

impl Dd {
    fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.hi, x);
        self.hi = s;
        self.lo += e;
    }

    fn add_prod(&mut self, a: f64, b: f64) {
        let p = a * b;
        let e = a.mul_add(b, -p);
        self.add(p);
        self.lo += e;
    }

    fn add_dd_prod(&mut self, a: f64, x: Dd) {
        self.add_prod(a, x.hi);
        self.lo += a * x.lo;
    }

    fn add_dd(&mut self, x: Dd) {
        self.add(x.hi);
        self.lo += x.lo;
    }

    fn value(self) -> f64 {
        self.hi + self.lo
    }
}

/// Largest eigenvalue of a Hermitian matrix by Lanczos with full
/// reorthogonalization.
pub fn lanczos_max(h: &Mat<c64>, tol: f64) -> f64 {
    let n = h.nrows();
    let max_iter = n.min(120);
    let mut basis: Vec<Col<c64>> = Vec::with_capacity(max_iter + 1);
    // Deterministic, generic start vector.
    let v = Col::from_fn(n, |i| {
        let x = (i as f64 * 0.754877666 + 0.1).fract();
        let y = (i as f64 * 0.569840291 + 0.3).fract();
        c64::new(x - 0.5, y - 0.5)
    });
    let nv = v.norm_l2();
    let v = Col::from_fn(n, |i| v[i] / nv);
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    basis.push(v);
    for it in 0..max_iter {
        let q = &basis[it];
        let mut w: Col<c64> = h * q;
        let a = (q.adjoint() * &w).re;
        alpha.push(a);
        for _ in 0..2 {
            for b in &basis {
                let c = b.adjoint() * &w;
                w -= faer::Scale(c) * b;
            }
        }
        let bnorm = w.norm_l2();
        let k = alpha.len();
        if k % 4 == 0 || bnorm < 1e-14 || it + 1 == max_iter {
            let t = DMatrix::from_fn(k, k, |i, j| {
                if i == j {
                    alpha[i]
                } else if i + 1 == j {
                    beta[i]
                } else if j + 1 == i {
                    beta[j]
                } else {
                    0.0
                }
            });
            let eig = t.symmetric_eigen();
            let (imax, theta) = eig
                .eigenvalues
                .iter()
                .cloned()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty");
            let resid = bnorm * eig.eigenvectors[(k - 1, imax)].abs();
            best = theta;
            if resid <= tol * theta.abs().max(1e-300) || bnorm < 1e-14 {
                break;
            }
        }
        beta.push(bnorm);
        basis.push(Col::from_fn(n, |i| w[i] / bnorm));
    }
    best
}

/// Location and value of `s_h,max`.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct SpectralMax {
    pub s_max: f64,
    pub zeta: [f64; 3],
    pub grid_max: f64,
}

/// `sup_{κ∈K0} λ_max(S(κ))` by a coarse `ζ`-grid with `grid` points per
/// axis over `[0, 2π]` (endpoints identified) and Nelder–Mead refinement of
/// the best few grid points.
pub fn spectral_radius_max(op: &SymbolOperator, grid: usize, tol: f64) -> Result<SpectralMax> {
    if grid < 2 {
        return Err(Error::InvalidParameter("grid must have at least 2 points".into()));
    }
    let g = grid - 1;
    let h = 2.0 * std::f64::consts::PI / g as f64;
    // ζ and -ζ give conjugate symbols; keep one of each pair.
    let mut pts = Vec::new();
    for i in 0..g {
        for j in 0..g {
            for k in 0..g {
                let me = [i, j, k];
                let neg = [(g - i) % g, (g - j) % g, (g - k) % g];
                if me <= neg {
                    pts.push(Vector3::new(i as f64 * h, j as f64 * h, k as f64 * h));
                }
            }
        }
    }
    let vals: Vec<f64> = pts
        .par_iter()
        .map(|z| op.max_eigenvalue_zeta(z))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..pts.len()).collect();
    order.sort_by(|a, b| vals[*b].total_cmp(&vals[*a]).then(a.cmp(b)));
    let grid_max = vals[order[0]];
    let starts: Vec<usize> = order.iter().take(3).cloned().collect();
    let mut best = (grid_max, pts[order[0]]);
    for s in starts {
        let f = |x: &[f64]| -> f64 {
            op.max_eigenvalue_zeta(&Vector3::new(x[0], x[1], x[2]))
                .map(|v| -v)
                .unwrap_or(f64::INFINITY)
        };
        let x0 = [pts[s][0], pts[s][1], pts[s][2]];
        let r = nelder_mead(&f, &x0, 0.5 * h, tol * grid_max.abs(), 1e-9, 300);
        if -r.value > best.0 {
            best = (-r.value, Vector3::new(r.x[0], r.x[1], r.x[2]));
        }
    }
    Ok(SpectralMax {
        s_max: best.0,
        zeta: [best.1[0], best.1[1], best.1[2]],
        grid_max,
    })
}
