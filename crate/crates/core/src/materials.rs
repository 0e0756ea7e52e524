//! Acoustic and isotropic elastic material models in the common `(ρ, C)` form.
//!
//! Gradients of an `m`-component field are stored as `3 × m` arrays
//! `G[k][l] = ∂_k u_l`, flattened as `k * m + l`. The fourth-order tensor is
//! kept as the `3m × 3m` energy matrix `E` with `σ = E g`, so that
//! `∇u : C : ∇w = gᵤᵀ E g_w`.

use std::fmt;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum MaterialKind {
    Acoustic,
    Elastic,
}

impl fmt::Display for MaterialKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaterialKind::Acoustic => "acoustic",
            MaterialKind::Elastic => "elastic",
        })
    }
}

#[derive(Clone, Debug)]
pub struct MaterialModel {
    kind: MaterialKind,
    m: usize,
    rho: f64,
    tensor: Vec<f64>,
    energy: DMatrix<f64>,
    /// `c` for acoustic; `(c_P, c_S)` for elastic.
    speeds: Vec<f64>,
    params: Vec<(String, f64)>,
}

impl MaterialModel {
    /// Acoustic model from density `ρ̃` and sound speed `c̃`.
    pub fn acoustic(rho_tilde: f64, c_tilde: f64) -> Result<Self> {
        if !(rho_tilde > 0.0 && c_tilde > 0.0) || !rho_tilde.is_finite() || !c_tilde.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "acoustic parameters must be positive, got rho={rho_tilde}, c={c_tilde}"
            )));
        }
        let m = 1;
        let mut tensor = vec![0.0; 9 * m * m];
        for i in 0..3 {
            tensor[tidx(m, i, 0, 0, i)] = 1.0 / rho_tilde;
        }
        Ok(Self::from_tensor(
            MaterialKind::Acoustic,
            m,
            1.0 / (rho_tilde * c_tilde * c_tilde),
            tensor,
            vec![c_tilde],
            vec![("rho".into(), rho_tilde), ("c".into(), c_tilde)],
        ))
    }

    /// Isotropic elastic model from density and Lamé parameters.
    pub fn elastic(rho: f64, lambda: f64, mu: f64) -> Result<Self> {
        if !(rho > 0.0 && mu > 0.0 && lambda >= 0.0) || !(rho + lambda + mu).is_finite() {
            return Err(Error::InvalidParameter(format!(
                "invalid elastic parameters rho={rho}, lambda={lambda}, mu={mu}"
            )));
        }
        let m = 3;
        let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        let mut tensor = vec![0.0; 81];
        for i in 0..3 {
            for j in 0..3 {
                for q in 0..3 {
                    for p in 0..3 {
                        tensor[tidx(m, i, j, q, p)] =
                            lambda * d(i, j) * d(p, q) + mu * (d(i, p) * d(j, q) + d(i, q) * d(j, p));
                    }
                }
            }
        }
        let cp = ((lambda + 2.0 * mu) / rho).sqrt();
        let cs = (mu / rho).sqrt();
        Ok(Self::from_tensor(
            MaterialKind::Elastic,
            m,
            rho,
            tensor,
            vec![cp, cs],
            vec![("rho".into(), rho), ("lambda".into(), lambda), ("mu".into(), mu)],
        ))
    }

    fn from_tensor(
        kind: MaterialKind,
        m: usize,
        rho: f64,
        tensor: Vec<f64>,
        speeds: Vec<f64>,
        params: Vec<(String, f64)>,
    ) -> Self {
        let n = 3 * m;
        // σ_ij = Σ_kl C_{ijlk} G_kl
        let energy = DMatrix::from_fn(n, n, |r, c| {
            let (i, j) = (r / m, r % m);
            let (k, l) = (c / m, c % m);
            tensor[tidx(m, i, j, l, k)]
        });
        Self {
            kind,
            m,
            rho,
            tensor,
            energy,
            speeds,
            params,
        }
    }

    pub fn kind(&self) -> MaterialKind {
        self.kind
    }

    /// Number of field components.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `C_{ijqp}` with `i, p` spatial and `j, q` component indices.
    pub fn c(&self, i: usize, j: usize, q: usize, p: usize) -> f64 {
        self.tensor[tidx(self.m, i, j, q, p)]
    }

    pub fn energy_matrix(&self) -> &DMatrix<f64> {
        &self.energy
    }

    pub fn params(&self) -> &[(String, f64)] {
        &self.params
    }

    /// Speed of the wave that defines resolution: `c` (acoustic) or `c_S` (elastic).
    pub fn reference_speed(&self) -> f64 {
        match self.kind {
            MaterialKind::Acoustic => self.speeds[0],
            MaterialKind::Elastic => self.speeds[1],
        }
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    /// `(c_P, c_S)` for elastic models.
    pub fn p_s_speeds(&self) -> Option<(f64, f64)> {
        match self.kind {
            MaterialKind::Elastic => Some((self.speeds[0], self.speeds[1])),
            MaterialKind::Acoustic => None,
        }
    }

    /// `C : G` for a flattened gradient.
    pub fn stress(&self, grad: &DVector<f64>) -> DVector<f64> {
        &self.energy * grad
    }

    /// `G : C : H`.
    pub fn energy(&self, g: &DVector<f64>, h: &DVector<f64>) -> f64 {
        g.dot(&(&self.energy * h))
    }

    /// Traction `n · σ` of a flattened stress.
    pub fn traction(&self, n: &Vector3<f64>, stress: &[f64]) -> Vec<f64> {
        let m = self.m;
        (0..m).map(|j| (0..3).map(|i| n[i] * stress[i * m + j]).sum()).collect()
    }

    /// `c_n = n · C · n`, an `m × m` matrix.
    pub fn normal_tensor(&self, n: &Vector3<f64>) -> DMatrix<f64> {
        let m = self.m;
        DMatrix::from_fn(m, m, |q, j| {
            let mut s = 0.0;
            for k in 0..3 {
                for i in 0..3 {
                    s += n[k] * self.c(k, q, j, i) * n[i];
                }
            }
            s
        })
    }

    /// Acoustic tensor `κ · C · κ / ρ`; its eigenvalues are `ω²` of the
    /// continuum plane waves.
    pub fn acoustic_tensor(&self, kappa: &Vector3<f64>) -> DMatrix<f64> {
        self.normal_tensor(kappa) / self.rho
    }
}

fn tidx(m: usize, i: usize, j: usize, q: usize, p: usize) -> usize {
    ((i * m + j) * m + q) * 3 + p
}

/// Orthonormal basis `(a1, a2)` of the plane perpendicular to `kappa`.
pub fn secondary_amplitude_pair(kappa: &Vector3<f64>) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let norm = kappa.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::ZeroWaveVector);
    }
    let k = kappa / norm;
    // Seed with the coordinate axis least aligned with k.
    let mut axis = 0;
    for i in 1..3 {
        if k[i].abs() < k[axis].abs() {
            axis = i;
        }
    }
    let mut e = Vector3::zeros();
    e[axis] = 1.0;
    let a1 = (e - k * k.dot(&e)).normalize();
    let a2 = k.cross(&a1).normalize();
    Ok((a1, a2))
}
