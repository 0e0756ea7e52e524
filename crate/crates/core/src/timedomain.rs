//! Lax–Wendroff time stepping on a periodic block of `N³` cells, used to
//! confirm the semi-analytic frequencies and the stability limit.

use faer::c64;
use nalgebra::{DMatrix, Vector3};
use serde::Serialize;

use crate::assembly::{LocalOperatorSet, MassMatrix};
use crate::error::{Error, Result};
use crate::mesh::{LatticeTransform, Shift};
use crate::symbol::{numerical_omega, stability_polynomial, SymbolOperator, TimeScheme};

#[derive(Clone, Debug)]
enum MassInverse {
    Diagonal(Vec<f64>),
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
}

/// The cell operators replicated over an `N × N × N` periodic lattice.
/// The stiffness is applied block by block; no global matrix is formed.
#[derive(Clone, Debug)]
pub struct PeriodicLattice {
    n: usize,
    n0: usize,
    blocks: Vec<(Shift, DMatrix<f64>)>,
    mass: MassMatrix,
    mass_inv: MassInverse,
    transform: LatticeTransform,
}

/// `(U(t_{i-1}), U(t_i))` with `i = step`.
#[derive(Clone, Debug)]
pub struct LatticeState {
    pub prev: Vec<f64>,
    pub curr: Vec<f64>,
    pub dt: f64,
    pub step: usize,
}

impl LatticeState {
    /// Swaps the two time levels; stepping afterwards runs backwards in time.
    pub fn reverse(&mut self) {
        std::mem::swap(&mut self.prev, &mut self.curr);
    }
}

impl PeriodicLattice {
    pub fn new(ops: &LocalOperatorSet, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("lattice size must be at least 1".into()));
        }
        let mass_inv = match &ops.mass {
            MassMatrix::Diagonal(d) => {
                if d.iter().any(|x| !(*x > 0.0)) {
                    return Err(Error::MassNotPositiveDefinite);
                }
                MassInverse::Diagonal(d.iter().map(|x| 1.0 / x).collect())
            }
            MassMatrix::Dense(m) => MassInverse::Dense(m.clone().cholesky().ok_or(Error::MassNotPositiveDefinite)?),
        };
        Ok(Self {
            n,
            n0: ops.n0,
            blocks: ops.blocks.iter().map(|(s, b)| (*s, b.clone())).collect(),
            mass: ops.mass.clone(),
            mass_inv,
            transform: ops.transform.clone(),
        })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn num_cells(&self) -> usize {
        self.n * self.n * self.n
    }

    /// Length of a lattice field, `N³ n0`.
    pub fn len(&self) -> usize {
        self.num_cells() * self.n0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn cell_coords(&self, c: usize) -> [usize; 3] {
        let n = self.n;
        [c % n, (c / n) % n, c / (n * n)]
    }

    fn cell_index(&self, x: [usize; 3]) -> usize {
        x[0] + self.n * (x[1] + self.n * x[2])
    }

    fn shifted_cell(&self, c: usize, s: Shift) -> usize {
        let n = self.n as i64;
        let x = self.cell_coords(c);
        let mut y = [0usize; 3];
        for d in 0..3 {
            y[d] = (x[d] as i64 + s[d] as i64).rem_euclid(n) as usize;
        }
        self.cell_index(y)
    }

    /// `(A x)_c = Σ_Δk A_Δk x_{c+Δk}`.
    pub fn apply_stiffness(&self, x: &[f64]) -> Vec<f64> {
        let (n0, cells) = (self.n0, self.num_cells());
        let xm = DMatrix::from_column_slice(n0, cells, x);
        let mut y = DMatrix::<f64>::zeros(n0, cells);
        let mut shifted = DMatrix::<f64>::zeros(n0, cells);
        for (s, b) in &self.blocks {
            for c in 0..cells {
                shifted.set_column(c, &xm.column(self.shifted_cell(c, *s)));
            }
            y.gemm(1.0, b, &shifted, 1.0);
        }
        y.as_slice().to_vec()
    }

    /// Cellwise `M0⁻¹`.
    pub fn apply_mass_inverse(&self, y: &mut [f64]) {
        match &self.mass_inv {
            MassInverse::Diagonal(d) => {
                for (v, w) in y.chunks_mut(self.n0).flat_map(|c| c.iter_mut().zip(d)) {
                    *v *= w;
                }
            }
            MassInverse::Dense(ch) => {
                for c in y.chunks_mut(self.n0) {
                    let sol = ch.solve(&nalgebra::DVector::from_column_slice(c));
                    c.copy_from_slice(sol.as_slice());
                }
            }
        }
    }

    /// `M⁻¹ A x`.
    pub fn apply_operator(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.apply_stiffness(x);
        self.apply_mass_inverse(&mut y);
        y
    }

    /// `xᵀ M y`.
    pub fn mass_inner(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.mass {
            MassMatrix::Diagonal(d) => x
                .chunks(self.n0)
                .zip(y.chunks(self.n0))
                .map(|(a, b)| a.iter().zip(b).zip(d).map(|((p, q), w)| p * q * w).sum::<f64>())
                .sum(),
            MassMatrix::Dense(m) => x
                .chunks(self.n0)
                .zip(y.chunks(self.n0))
                .map(|(a, b)| {
                    let (a, b) = (
                        nalgebra::DVector::from_column_slice(a),
                        nalgebra::DVector::from_column_slice(b),
                    );
                    a.dot(&(m * b))
                })
                .sum(),
        }
    }

    pub fn mass_norm(&self, x: &[f64]) -> f64 {
        self.mass_inner(x, x).max(0.0).sqrt()
    }

    /// Wave vector of the lattice-periodic plane wave with index `z`:
    /// `ζ = 2π z / N`, `κ = T^{-t} ζ`.
    pub fn wave_vector(&self, z: [usize; 3]) -> Result<Vector3<f64>> {
        if z.iter().any(|&v| v >= self.n) {
            return Err(Error::InvalidParameter(format!(
                "wave index {z:?} outside 0..{}",
                self.n
            )));
        }
        let h = 2.0 * std::f64::consts::PI / self.n as f64;
        Ok(self
            .transform
            .wave_vector(&Vector3::new(z[0] as f64 * h, z[1] as f64 * h, z[2] as f64 * h)))
    }

    /// Lattice field `F_c = e^{iκ·T c} u`, returned as real and imaginary parts.
    pub fn bloch_field(&self, kappa: &Vector3<f64>, u: &[c64]) -> (Vec<f64>, Vec<f64>) {
        let zeta = self.transform.lattice_wavenumbers(kappa);
        let mut re = Vec::with_capacity(self.len());
        let mut im = Vec::with_capacity(self.len());
        for c in 0..self.num_cells() {
            let x = self.cell_coords(c);
            let phase = zeta[0] * x[0] as f64 + zeta[1] * x[1] as f64 + zeta[2] * x[2] as f64;
            let e = c64::new(phase.cos(), phase.sin());
            for v in u {
                let f = e * v;
                re.push(f.re);
                im.push(f.im);
            }
        }
        (re, im)
    }

    /// Global stiffness and mass as dense matrices.
    pub fn dense_operators(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let (n0, cells) = (self.n0, self.num_cells());
        let size = n0 * cells;
        let mut a = DMatrix::zeros(size, size);
        let mut m = DMatrix::zeros(size, size);
        let md = self.mass.to_dense();
        for c in 0..cells {
            for (s, b) in &self.blocks {
                let d = self.shifted_cell(c, *s);
                let mut v = a.view_mut((c * n0, d * n0), (n0, n0));
                v += b;
            }
            m.view_mut((c * n0, c * n0), (n0, n0)).copy_from(&md);
        }
        (a, m)
    }
}

/// One step `U(t_{i+1}) = -U(t_{i-1}) + 2 Σ_{k≤K} Δt^{2k}/(2k)! (-M⁻¹A)^k U(t_i)`,
/// with the polynomial evaluated by Horner's rule.
pub fn lw_step(lattice: &PeriodicLattice, state: &mut LatticeState, k: usize) {
    let y = stability_polynomial_apply(lattice, &state.curr, state.dt, k);
    let next: Vec<f64> = y.iter().zip(&state.prev).map(|(a, b)| 2.0 * a - b).collect();
    state.prev = std::mem::replace(&mut state.curr, next);
    state.step += 1;
}

/// `Σ_{j≤K} (-Δt² M⁻¹A)^j / (2j)! x`.
pub fn stability_polynomial_apply(lattice: &PeriodicLattice, x: &[f64], dt: f64, k: usize) -> Vec<f64> {
    let coef: Vec<f64> = (0..=k).map(|j| 1.0 / factorial(2 * j)).collect();
    let mut y: Vec<f64> = x.iter().map(|v| coef[k] * v).collect();
    for j in (0..k).rev() {
        let by = lattice.apply_operator(&y);
        for ((yi, xi), bi) in y.iter_mut().zip(x).zip(&by) {
            *yi = coef[j] * xi - dt * dt * bi;
        }
    }
    y
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Taylor start `U(t_1) = Σ_{k≤2K+1} Δt^k/k! ∂_t^k U(0)` with
/// `∂_t^k U = -M⁻¹A ∂_t^{k-2} U`, no source.
pub fn taylor_start(lattice: &PeriodicLattice, u0: &[f64], v0: &[f64], dt: f64, k: usize) -> LatticeState {
    let mut even = u0.to_vec();
    let mut odd = v0.to_vec();
    let mut u1: Vec<f64> = u0.iter().zip(v0).map(|(a, b)| a + dt * b).collect();
    for j in 1..=k {
        even = lattice.apply_operator(&even).into_iter().map(|v| -v).collect();
        odd = lattice.apply_operator(&odd).into_iter().map(|v| -v).collect();
        let ce = dt.powi(2 * j as i32) / factorial(2 * j);
        let co = dt.powi(2 * j as i32 + 1) / factorial(2 * j + 1);
        for ((t, e), o) in u1.iter_mut().zip(&even).zip(&odd) {
            *t += ce * e + co * o;
        }
    }
    LatticeState {
        prev: u0.to_vec(),
        curr: u1,
        dt,
        step: 1,
    }
}

/// A symbol eigenmode placed on the lattice.
#[derive(Clone, Debug)]
pub struct LatticeMode {
    pub z: [usize; 3],
    pub kappa: Vector3<f64>,
    pub mode: usize,
    pub s: f64,
    /// Real and imaginary parts of the Bloch field.
    pub field_re: Vec<f64>,
    pub field_im: Vec<f64>,
}

/// Eigenmode `mode` (ascending order) of the symbol at the lattice wave index `z`.
pub fn lattice_mode(lattice: &PeriodicLattice, op: &SymbolOperator, z: [usize; 3], mode: usize) -> Result<LatticeMode> {
    if op.n0() != lattice.n0() {
        return Err(Error::InvalidParameter("symbol and lattice sizes differ".into()));
    }
    let kappa = lattice.wave_vector(z)?;
    let sys = op.eigensystem(&kappa)?;
    if mode >= op.n0() {
        return Err(Error::InvalidParameter(format!(
            "mode index {mode} outside 0..{}",
            op.n0()
        )));
    }
    let mut u: Vec<c64> = (0..op.n0()).map(|i| sys.vectors[(i, mode)]).collect();
    // Fix the phase so the largest entry is real; modes at real symbols
    // (2ζ ≡ 0) then give purely real fields.
    let big = u
        .iter()
        .cloned()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .expect("nonempty");
    let rot = big.conj() / big.norm();
    for v in &mut u {
        *v *= rot;
    }
    let (field_re, field_im) = lattice.bloch_field(&kappa, &u);
    Ok(LatticeMode {
        z,
        kappa,
        mode,
        s: sys.eigenvalues[mode],
        field_re,
        field_im,
    })
}

/// Initial state for the real part of `F e^{-iω_h t}`:
/// `u_0 = Re F`, `v_0 = Re(-iω_h F) = ω_h Im F`.
pub fn initialize_plane_wave(
    lattice: &PeriodicLattice,
    mode: &LatticeMode,
    scheme: &TimeScheme,
) -> Result<LatticeState> {
    let omega = numerical_omega(mode.s.max(0.0), scheme.dt, scheme.k)?;
    let v0: Vec<f64> = mode.field_im.iter().map(|v| omega * v).collect();
    Ok(taylor_start(lattice, &mode.field_re, &v0, scheme.dt, scheme.k))
}

/// Frequency from the samples `c_n = ⟨U(t_n), U(t_0)⟩_M`. For a single
/// discrete mode `c_{n+1} + c_{n-1} = 2 cos(ω Δt) c_n` exactly; `cos(ω Δt)`
/// is fitted by least squares over all interior samples.
pub fn measure_phase(samples: &[f64], dt: f64) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::InvalidParameter("at least three samples are needed".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for w in samples.windows(3) {
        num += (2.0 * w[1] - w[0] - w[2]) * w[1];
        den += 2.0 * w[1] * w[1];
    }
    if !(den > 0.0) {
        return Err(Error::InvalidParameter("samples vanish".into()));
    }
    // 1 - cos θ
    let defect = num / den;
    let theta = if defect <= 1.0 {
        2.0 * (0.5 * defect.max(0.0)).sqrt().asin()
    } else {
        (1.0 - defect).max(-1.0).acos()
    };
    if theta > 0.5 * std::f64::consts::PI {
        return Err(Error::InvalidParameter(format!(
            "aliased phase: {:.2} steps per period, need at least 4",
            2.0 * std::f64::consts::PI / theta
        )));
    }
    if theta * ((samples.len() - 1) as f64) < 2.0 * std::f64::consts::PI {
        return Err(Error::InvalidParameter(
            "fewer than one full oscillation simulated".into(),
        ));
    }
    Ok(theta / dt)
}

/// History of a run: phase samples against the initial state and the
/// largest mass norm seen.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub samples: Vec<f64>,
    pub max_norm: f64,
    pub initial_norm: f64,
}

/// Steps `steps` times, recording `⟨U(t_n), U(t_0)⟩_M` for `n = 0..=steps`.
pub fn run(lattice: &PeriodicLattice, state: &mut LatticeState, k: usize, steps: usize) -> RunRecord {
    let reference = state.prev.clone();
    let initial_norm = lattice.mass_norm(&reference);
    let mut samples = vec![
        lattice.mass_inner(&state.prev, &reference),
        lattice.mass_inner(&state.curr, &reference),
    ];
    let mut max_norm = initial_norm.max(lattice.mass_norm(&state.curr));
    for _ in 1..steps {
        lw_step(lattice, state, k);
        samples.push(lattice.mass_inner(&state.curr, &reference));
        max_norm = max_norm.max(lattice.mass_norm(&state.curr));
    }
    RunRecord {
        samples,
        max_norm,
        initial_norm,
    }
}

/// Largest norm of `cos φ U_0 + sin φ W` over `φ`, the amplitude of a
/// stable single-frequency oscillation started from `(U_0, U_1)`, with
/// `W = (U_1 - cos θ U_0)/sin θ`. `None` if `|P| ≥ 1`.
pub fn oscillation_envelope(lattice: &PeriodicLattice, u0: &[f64], u1: &[f64], p: f64) -> Option<f64> {
    if !(p.abs() < 1.0) {
        return None;
    }
    let sin = (1.0 - p * p).sqrt();
    let w: Vec<f64> = u1.iter().zip(u0).map(|(a, b)| (a - p * b) / sin).collect();
    let g11 = lattice.mass_inner(u0, u0);
    let g22 = lattice.mass_inner(&w, &w);
    let g12 = lattice.mass_inner(u0, &w);
    Some((0.5 * (g11 + g22) + (0.25 * (g11 - g22).powi(2) + g12 * g12).sqrt()).sqrt())
}

/// Outcome of a single-mode time-domain run. The frequencies are absent
/// when the step is outside the stability limit for the mode; the run then
/// starts from rest and only the growth is reported.
#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub method: String,
    pub lattice: usize,
    pub z: [usize; 3],
    pub mode: usize,
    pub s: f64,
    pub dt: f64,
    pub steps: usize,
    pub predicted_omega: Option<f64>,
    pub empirical_omega: Option<f64>,
    pub rel_err: Option<f64>,
    pub max_amplitude: f64,
    pub envelope: f64,
    pub stable: bool,
}

/// Runs mode `mode` at wave index `z` on an `n³` lattice with the scheme's
/// step and compares the measured frequency with the symbol prediction.
/// `steps = None` simulates about three periods (at least 64 steps).
pub fn verify_mode(
    ops: &LocalOperatorSet,
    scheme: &TimeScheme,
    n: usize,
    z: [usize; 3],
    mode: usize,
    steps: Option<usize>,
) -> Result<VerifyReport> {
    let lattice = PeriodicLattice::new(ops, n)?;
    let op = SymbolOperator::new(ops)?;
    let lm = lattice_mode(&lattice, &op, z, mode)?;
    let p = stability_polynomial(scheme.dt * scheme.dt * lm.s.max(0.0), scheme.k);
    let predicted = match numerical_omega(lm.s.max(0.0), scheme.dt, scheme.k) {
        Ok(w) => Some(w),
        Err(Error::Unstable(_)) => None,
        Err(e) => return Err(e),
    };
    let theta = predicted.unwrap_or(0.0) * scheme.dt;
    let steps = steps.unwrap_or_else(|| {
        if theta > 0.0 {
            ((6.0 * std::f64::consts::PI / theta).ceil() as usize).max(64)
        } else {
            1000
        }
    });
    let mut state = match predicted {
        Some(_) => initialize_plane_wave(&lattice, &lm, scheme)?,
        None => {
            let zero = vec![0.0; lattice.len()];
            let mut both = lm.field_re.clone();
            for (b, v) in both.iter_mut().zip(&lm.field_im) {
                *b += v;
            }
            taylor_start(&lattice, &both, &zero, scheme.dt, scheme.k)
        }
    };
    let envelope =
        oscillation_envelope(&lattice, &state.prev, &state.curr, p).unwrap_or_else(|| lattice.mass_norm(&state.prev));
    let rec = run(&lattice, &mut state, scheme.k, steps);
    let empirical = match predicted {
        Some(_) => Some(measure_phase(&rec.samples, scheme.dt)?),
        None => None,
    };
    let rel_err = match (predicted, empirical) {
        (Some(w), Some(e)) if w > 0.0 => Some((e - w).abs() / w),
        (Some(_), Some(e)) => Some(e.abs()),
        _ => None,
    };
    let stable = rec.max_norm.is_finite() && rec.max_norm <= (1.0 + 1e-6 + 1e-9 * steps as f64) * envelope;
    Ok(VerifyReport {
        method: ops.method.to_string(),
        lattice: n,
        z,
        mode,
        s: lm.s,
        dt: scheme.dt,
        steps,
        predicted_omega: predicted,
        empirical_omega: empirical,
        rel_err,
        max_amplitude: rec.max_norm,
        envelope,
        stable,
    })
}

/// Growth of a real cosine mode (`v_0 = 0`) under a given step.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityProbe {
    pub dt: f64,
    pub s: f64,
    pub steps: usize,
    /// `max_n ‖U(t_n)‖_M / ‖U(t_0)‖_M`.
    pub growth: f64,
    pub bounded: bool,
}

/// Runs the mode at wave index `z` (with `2ζ ≡ 0`, so the field is real)
/// from rest at step `dt` for `steps` steps.
pub fn stability_probe(
    lattice: &PeriodicLattice,
    op: &SymbolOperator,
    z: [usize; 3],
    mode: usize,
    k: usize,
    dt: f64,
    steps: usize,
) -> Result<StabilityProbe> {
    let n = lattice.size();
    if z.iter().any(|&v| (2 * v) % n != 0) {
        return Err(Error::InvalidParameter(
            "stability probes need a real mode: 2z must be a multiple of N".into(),
        ));
    }
    let lm = lattice_mode(lattice, op, z, mode)?;
    let zero = vec![0.0; lattice.len()];
    let mut state = taylor_start(lattice, &lm.field_re, &zero, dt, k);
    let rec = run(lattice, &mut state, k, steps);
    let growth = rec.max_norm / rec.initial_norm;
    Ok(StabilityProbe {
        dt,
        s: lm.s,
        steps,
        growth,
        bounded: growth.is_finite() && growth <= 1.0 + 1e-6 + 1e-9 * steps as f64,
    })
}

/// The mode with the largest eigenvalue among the real lattice modes
/// (`ζ ∈ {0, π}³`): `(z, mode, s)` for an even lattice size `n`.
pub fn extremal_real_mode(
    op: &SymbolOperator,
    transform: &LatticeTransform,
    n: usize,
) -> Result<([usize; 3], usize, f64)> {
    if n % 2 != 0 {
        return Err(Error::InvalidParameter("lattice size must be even".into()));
    }
    let half = n / 2;
    let mut best = ([0; 3], 0, f64::NEG_INFINITY);
    for i in 0..8 {
        let z = [(i & 1) * half, ((i >> 1) & 1) * half, ((i >> 2) & 1) * half];
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let kappa = transform.wave_vector(&Vector3::new(z[0] as f64 * h, z[1] as f64 * h, z[2] as f64 * h));
        let ev = op.eigenvalues(&kappa)?;
        let top = ev.len() - 1;
        if ev[top] > best.2 {
            best = (z, top, ev[top]);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, Method, PenaltyVariant};
    use crate::elements::RuleName;
    use crate::materials::MaterialModel;
    use crate::mesh::build_disphenoid_cell;
    use crate::symbol::spectral_radius_max;

    fn setup(method: Method) -> (LocalOperatorSet, SymbolOperator, TimeScheme) {
        let mat = MaterialModel::acoustic(1.0, 1.0).unwrap();
        let ops = assemble(method, &build_disphenoid_cell(), &mat).unwrap();
        let op = SymbolOperator::new(&ops).unwrap();
        let sm = spectral_radius_max(&op, 5, 1e-6).unwrap();
        let scheme = TimeScheme::new(method.degree(), sm.s_max).unwrap();
        (ops, op, scheme)
    }

    #[test]
    fn leapfrog_for_one_term() {
        let (ops, op, _) = setup(Method::MassLumped(RuleName::ML1));
        let lattice = PeriodicLattice::new(&ops, 3).unwrap();
        let x: Vec<f64> = (0..lattice.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..lattice.len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let dt = 0.1;
        let mut st = LatticeState {
            prev: y.clone(),
            curr: x.clone(),
            dt,
            step: 0,
        };
        lw_step(&lattice, &mut st, 1);
        let bx = lattice.apply_operator(&x);
        for i in 0..x.len() {
            let expect = 2.0 * x[i] - y[i] - dt * dt * bx[i];
            assert!((st.curr[i] - expect).abs() < 1e-13);
        }
        let _ = op;
    }

    #[test]
    fn matches_dense_reference() {
        for method in [
            Method::MassLumped(RuleName::ML2),
            Method::Dg {
                degree: 2,
                penalty: PenaltyVariant::Eigenvalue,
            },
        ] {
            let (ops, _, scheme) = setup(method);
            let lattice = PeriodicLattice::new(&ops, 2).unwrap();
            let (a, m) = lattice.dense_operators();
            let b = m.clone().cholesky().unwrap().solve(&a);
            let x = nalgebra::DVector::from_fn(lattice.len(), |i, _| (i as f64 * 0.73).sin());
            let prev = nalgebra::DVector::from_fn(lattice.len(), |i, _| (i as f64 * 0.29).cos());
            let mut st = LatticeState {
                prev: prev.as_slice().to_vec(),
                curr: x.as_slice().to_vec(),
                dt: scheme.dt,
                step: 0,
            };
            lw_step(&lattice, &mut st, scheme.k);
            let mut term = x.clone();
            let mut poly = x.clone();
            for j in 1..=scheme.k {
                term = -(&b * term) * (scheme.dt * scheme.dt);
                poly += &term / factorial(2 * j);
            }
            let expect = poly * 2.0 - prev;
            let scale = expect.amax();
            for i in 0..lattice.len() {
                assert!((st.curr[i] - expect[i]).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn kernel_mode_is_stationary() {
        let (ops, op, scheme) = setup(Method::MassLumped(RuleName::ML2));
        let lattice = PeriodicLattice::new(&ops, 2).unwrap();
        let lm = lattice_mode(&lattice, &op, [0, 0, 0], 0).unwrap();
        assert!(lm.s.abs() < 1e-10);
        let mut st = initialize_plane_wave(&lattice, &lm, &scheme).unwrap();
        let u0 = st.prev.clone();
        for _ in 0..20 {
            lw_step(&lattice, &mut st, scheme.k);
        }
        let d: f64 = st.curr.iter().zip(&u0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d < 1e-9, "{d}");
    }

    #[test]
    fn frequency_and_reversibility() {
        let method = Method::Dg {
            degree: 1,
            penalty: PenaltyVariant::InscribedSphere,
        };
        let (ops, op, scheme) = setup(method);
        let r = verify_mode(&ops, &scheme, 4, [1, 0, 3], 0, None).unwrap();
        assert!(r.rel_err.unwrap() < 1e-8, "{r:?}");
        assert!(r.stable);

        let lattice = PeriodicLattice::new(&ops, 4).unwrap();
        let lm = lattice_mode(&lattice, &op, [1, 2, 0], 3).unwrap();
        let mut st = initialize_plane_wave(&lattice, &lm, &scheme).unwrap();
        let (u0, u1) = (st.prev.clone(), st.curr.clone());
        for _ in 0..50 {
            lw_step(&lattice, &mut st, scheme.k);
        }
        // Closure: the state stays in span{Re F, Im F}.
        let gram = [
            [
                lattice.mass_inner(&lm.field_re, &lm.field_re),
                lattice.mass_inner(&lm.field_re, &lm.field_im),
            ],
            [
                lattice.mass_inner(&lm.field_im, &lm.field_re),
                lattice.mass_inner(&lm.field_im, &lm.field_im),
            ],
        ];
        let rhs = [
            lattice.mass_inner(&lm.field_re, &st.curr),
            lattice.mass_inner(&lm.field_im, &st.curr),
        ];
        let det = gram[0][0] * gram[1][1] - gram[0][1] * gram[1][0];
        let a = (rhs[0] * gram[1][1] - rhs[1] * gram[0][1]) / det;
        let b = (gram[0][0] * rhs[1] - gram[1][0] * rhs[0]) / det;
        let resid: Vec<f64> = (0..lattice.len())
            .map(|i| st.curr[i] - a * lm.field_re[i] - b * lm.field_im[i])
            .collect();
        assert!(lattice.mass_norm(&resid) <= 1e-9 * lattice.mass_norm(&st.curr));

        st.reverse();
        for _ in 0..50 {
            lw_step(&lattice, &mut st, scheme.k);
        }
        let err = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err(&st.curr, &u0) < 1e-10 && err(&st.prev, &u1) < 1e-10);
    }

    #[test]
    fn aliasing_is_rejected() {
        let s: Vec<f64> = (0..40).map(|n| (2.0 * n as f64).cos()).collect();
        assert!(measure_phase(&s, 1.0).is_err());
        let s: Vec<f64> = (0..40).map(|n| (0.5 * n as f64).cos()).collect();
        assert!((measure_phase(&s, 1.0).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn stability_boundary_for_ml1() {
        let (ops, op, scheme) = setup(Method::MassLumped(RuleName::ML1));
        let lattice = PeriodicLattice::new(&ops, 2).unwrap();
        let (z, mode, s) = extremal_real_mode(&op, lattice_transform(&ops), 2).unwrap();
        assert!((s - scheme.s_max).abs() < 1e-9 * s);
        let above = stability_probe(&lattice, &op, z, mode, 1, 1.001 * scheme.dt, 1000).unwrap();
        let below = stability_probe(&lattice, &op, z, mode, 1, 0.999 * scheme.dt, 1000).unwrap();
        assert!(!above.bounded && above.growth > 1e3);
        assert!(below.bounded);
    }

    fn lattice_transform(ops: &LocalOperatorSet) -> &LatticeTransform {
        &ops.transform
    }
}
