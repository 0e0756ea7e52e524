//! Worst case over directions, resolution and cost accounting, convergence
//! fits and study sweeps.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::Serialize;

use crate::assembly::{assemble, LocalOperatorSet, Method};
use crate::dispersion::{DispersionAnalyzer, KappaErrors, DEFAULT_SMAX_GRID, DEFAULT_SMAX_TOL};
use crate::error::{Error, Result};
use crate::materials::MaterialModel;
use crate::mesh::{MeshSpec, UnitCellMesh};
use crate::optimize::nelder_mead;

/// Direction search settings.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SearchOptions {
    /// Size of the full-sphere Fibonacci lattice; half of it (one hemisphere)
    /// is evaluated since `κ` and `-κ` give identical errors.
    pub directions: usize,
    /// Local refinements started from the best grid directions.
    pub restarts: usize,
    pub max_evals: usize,
    /// Relative objective tolerance of the local refinement.
    pub tol: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            directions: 200,
            restarts: 3,
            max_evals: 60,
            tol: 1e-4,
        }
    }
}

/// `n/2` points of a Fibonacci lattice on the upper unit hemisphere.
pub fn fibonacci_hemisphere(n: usize) -> Vec<Vector3<f64>> {
    let h = (n / 2).max(1);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..h)
        .map(|i| {
            let z = (i as f64 + 0.5) / h as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            Vector3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

fn spherical(theta: f64, phi: f64) -> Vector3<f64> {
    Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

fn to_spherical(d: &Vector3<f64>) -> [f64; 2] {
    [d[2].clamp(-1.0, 1.0).acos(), d[1].atan2(d[0])]
}

/// Grid directions screened with refined eigenvalues beyond the restarts.
const SCREENED_EXTRA: usize = 2;
/// Relative gap between plain and refined `e_disp` that marks plain values
/// as roundoff-dominated.
const SCREEN_TOL: f64 = 1e-3;

/// Worst-case errors over directions at one wavelength.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WorstCase {
    pub e_disp: f64,
    pub e_vec: f64,
    pub dir_disp: [f64; 3],
    pub dir_vec: [f64; 3],
}

/// `sup_{|κ| = 2π/λ} e_disp(κ)` and `sup e_vec(κ)`, each maximized separately.
pub fn worst_case_over_directions(an: &DispersionAnalyzer, lambda: f64, opts: &SearchOptions) -> Result<WorstCase> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("wavelength must be positive".into()));
    }
    let k = 2.0 * std::f64::consts::PI / lambda;
    let dirs = fibonacci_hemisphere(opts.directions);
    let grid: Vec<KappaErrors> = dirs.par_iter().map(|d| an.errors(&(d * k))).collect::<Result<_>>()?;
    let spacing = (4.0 * std::f64::consts::PI / opts.directions.max(2) as f64).sqrt();

    let ranked = |vals: &[f64]| -> Vec<usize> {
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|a, b| vals[*b].total_cmp(&vals[*a]).then(a.cmp(b)));
        order
    };
    let climb = |starts: &[(f64, Vector3<f64>)],
                 f: &(dyn Fn(&Vector3<f64>) -> Result<f64> + Sync)|
     -> Vec<(f64, Vector3<f64>)> {
        starts
            .par_iter()
            .map(|(v, d)| {
                let obj = |x: &[f64]| -> f64 { f(&spherical(x[0], x[1])).map(|v| -v).unwrap_or(f64::INFINITY) };
                let r = nelder_mead(
                    &obj,
                    &to_spherical(d),
                    0.5 * spacing,
                    opts.tol * v,
                    1e-4,
                    opts.max_evals,
                );
                (-r.value, spherical(r.x[0], r.x[1]))
            })
            .collect()
    };
    let keep_max = |best: &mut (f64, Vector3<f64>), cands: &[(f64, Vector3<f64>)]| {
        for c in cands {
            if c.0 > best.0 {
                *best = *c;
            }
        }
    };

    // Dispersion: the best grid directions are re-evaluated with the refined
    // eigenvalues. Near the roundoff floor the plain values misrank
    // directions, and the climb then uses the refined objective too.
    let disp_vals: Vec<f64> = grid.iter().map(|e| e.e_disp).collect();
    let order = ranked(&disp_vals);
    let screened: Vec<(usize, f64)> = order
        .iter()
        .take(opts.restarts + SCREENED_EXTRA)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|i| Ok((**i, an.errors_refined(&(dirs[**i] * k))?.e_disp)))
        .collect::<Result<_>>()?;
    let noisy = screened
        .iter()
        .any(|(i, r)| (disp_vals[*i] - r).abs() > SCREEN_TOL * r.abs().max(f64::MIN_POSITIVE));
    let mut starts: Vec<(f64, Vector3<f64>)> = screened.iter().map(|(i, r)| (*r, dirs[*i])).collect();
    starts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best_disp = starts[0];
    if best_disp.0 > 0.0 {
        let climbed = if noisy {
            climb(&starts[..opts.restarts.min(starts.len())], &|d| {
                Ok(an.errors_refined(&(d * k))?.e_disp)
            })
        } else {
            climb(&starts[..opts.restarts.min(starts.len())], &|d| {
                an.dispersion_error(&(d * k))
            })
            .into_iter()
            .map(|(_, d)| Ok((an.errors_refined(&(d * k))?.e_disp, d)))
            .collect::<Result<_>>()?
        };
        keep_max(&mut best_disp, &climbed);
    }
    let (e_disp, dd) = best_disp;

    let vec_vals: Vec<f64> = grid.iter().map(|e| e.e_vec).collect();
    let order = ranked(&vec_vals);
    let mut best_vec = (vec_vals[order[0]], dirs[order[0]]);
    if best_vec.0 > 0.0 {
        let starts: Vec<(f64, Vector3<f64>)> = order
            .iter()
            .take(opts.restarts)
            .map(|i| (vec_vals[*i], dirs[*i]))
            .collect();
        let climbed = climb(&starts, &|d| an.eigenvector_error(&(d * k)));
        keep_max(&mut best_vec, &climbed);
    }
    let (e_vec, dv) = best_vec;
    Ok(WorstCase {
        e_disp,
        e_vec,
        dir_disp: [dd[0], dd[1], dd[2]],
        dir_vec: [dv[0], dv[1], dv[2]],
    })
}

/// `N_E = ∛(λ³/|e|_av)`.
pub fn elements_per_wavelength(mesh: &UnitCellMesh, lambda: f64) -> f64 {
    lambda / mesh.avg_elem_volume().cbrt()
}

/// Inverse of [`elements_per_wavelength`].
pub fn wavelength_for(mesh: &UnitCellMesh, ne: f64) -> f64 {
    ne * mesh.avg_elem_volume().cbrt()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct CostModel {
    pub n_vec: f64,
    pub n_mat: f64,
    pub n_dt: f64,
    pub n_comp: f64,
}

/// `n_vec = n0 λ³/|Ω0|`, `n_mat` from the cell's coupling count,
/// `N_Δt = λ/(c Δt)`, `n_comp = n_mat K N_Δt`.
pub fn cost_model(ops: &LocalOperatorSet, an: &DispersionAnalyzer, lambda: f64) -> CostModel {
    let cells = lambda.powi(3) / ops.cell_volume;
    let n_vec = ops.n0 as f64 * cells;
    let n_mat = ops.coupling_entries as f64 * cells;
    let n_dt = lambda / (an.speed() * an.scheme.dt);
    CostModel {
        n_vec,
        n_mat,
        n_dt,
        n_comp: n_mat * an.scheme.k as f64 * n_dt,
    }
}

/// `e ≈ α N_E^{-β}`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConvergenceFit {
    pub alpha: f64,
    pub beta: f64,
    /// Log-log RMS residual.
    pub rms: f64,
    pub ne_min: f64,
    pub ne_max: f64,
    pub samples: usize,
    /// Errors not monotonically decreasing over the fitted range.
    pub non_monotone: bool,
}

fn finest_half(samples: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    let mut s: Vec<(f64, f64)> = samples.iter().cloned().filter(|(n, e)| *n > 0.0 && *e > 0.0).collect();
    if s.len() < 3 {
        return Err(Error::InvalidParameter(
            "a convergence fit needs at least 3 positive samples".into(),
        ));
    }
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    let keep = (s.len() / 2).max(3).min(s.len());
    Ok(s[s.len() - keep..].to_vec())
}

fn monotone(s: &[(f64, f64)]) -> bool {
    s.windows(2).all(|w| w[1].1 <= w[0].1 * 1.05)
}

/// Least-squares line in log-log coordinates over the finest half of the
/// samples (at least 3).
pub fn fit_convergence(samples: &[(f64, f64)]) -> Result<ConvergenceFit> {
    let s = finest_half(samples)?;
    let n = s.len() as f64;
    let xs: Vec<f64> = s.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = s.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidParameter("samples need distinct N_E".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(ConvergenceFit {
        alpha: intercept.exp(),
        beta: -slope,
        rms,
        ne_min: s[0].0,
        ne_max: s[s.len() - 1].0,
        samples: s.len(),
        non_monotone: !monotone(&s),
    })
}

/// Leading constant for a prescribed order: geometric mean of `e N_E^β` over
/// the finest half of the samples.
pub fn fit_fixed_order(samples: &[(f64, f64)], beta: f64) -> Result<ConvergenceFit> {
    let s = finest_half(samples)?;
    let n = s.len() as f64;
    let logs: Vec<f64> = s.iter().map(|(ne, e)| e.ln() + beta * ne.ln()).collect();
    let mean = logs.iter().sum::<f64>() / n;
    let rms = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok(ConvergenceFit {
        alpha: mean.exp(),
        beta,
        rms,
        ne_min: s[0].0,
        ne_max: s[s.len() - 1].0,
        samples: s.len(),
        non_monotone: !monotone(&s),
    })
}

/// `(α/target)^{1/β}`.
pub fn required_ne(alpha: f64, beta: f64, target: f64) -> Result<f64> {
    if !(target > 0.0) || !(alpha > 0.0) || !(beta > 0.0) {
        return Err(Error::InvalidParameter("fit and target must be positive".into()));
    }
    Ok((alpha / target).powf(1.0 / beta))
}

/// One row of a study.
#[derive(Clone, Debug, Serialize)]
pub struct DispersionReport {
    pub method: String,
    pub material: String,
    pub mesh: String,
    pub lambda: f64,
    pub ne: f64,
    pub e_disp: f64,
    pub e_vec: f64,
    pub dt: f64,
    pub n_dt: f64,
    pub n_vec: f64,
    pub n_mat: f64,
    pub n_comp: f64,
}

/// Column order of [`DispersionReport`] CSV output.
pub const REPORT_COLUMNS: [&str; 12] = [
    "method", "material", "mesh", "lambda", "ne", "e_disp", "e_vec", "dt", "n_dt", "n_vec", "n_mat", "n_comp",
];

/// Fits for one method.
#[derive(Clone, Debug, Serialize)]
pub struct MethodFits {
    pub method: String,
    /// Free fit of the dispersion error.
    pub disp: ConvergenceFit,
    /// Dispersion constant at the nominal order `2p`.
    pub disp_nominal: ConvergenceFit,
    /// Free fit of the eigenvector error (absent when it vanishes identically).
    pub vec: Option<ConvergenceFit>,
    /// Eigenvector constant at the nominal order `p+1`.
    pub vec_nominal: Option<ConvergenceFit>,
    pub dt: f64,
    pub s_max: f64,
}

/// Inputs of a study.
#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub methods: Vec<Method>,
    pub material: MaterialModel,
    pub mesh: MeshSpec,
    /// Elements-per-wavelength samples; `None` uses [`default_ne_grid`].
    pub ne: Option<Vec<f64>>,
    pub search: SearchOptions,
    pub smax_grid: usize,
    pub smax_tol: f64,
}

impl StudyConfig {
    pub fn new(methods: Vec<Method>, material: MaterialModel, mesh: MeshSpec) -> Self {
        Self {
            methods,
            material,
            mesh,
            ne: None,
            search: SearchOptions::default(),
            smax_grid: DEFAULT_SMAX_GRID,
            smax_tol: DEFAULT_SMAX_TOL,
        }
    }
}

/// Eight geometrically spaced samples covering a factor 5.5, so the finest
/// half spans an octave.
pub fn default_ne_grid(degree: usize) -> Vec<f64> {
    let start = match degree {
        1 => 16.0,
        2 => 8.0,
        _ => 10.0,
    };
    (0..8).map(|i| start * 5.5f64.powf(i as f64 / 7.0)).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct StudyResult {
    pub reports: Vec<DispersionReport>,
    pub fits: Vec<MethodFits>,
}

/// Reports over the `N_E` grid without fitting.
pub fn method_reports(
    method: Method,
    mesh: &UnitCellMesh,
    mesh_label: &str,
    config: &StudyConfig,
) -> Result<Vec<DispersionReport>> {
    sweep_reports(method, mesh, mesh_label, config).map(|r| r.0)
}

fn sweep_reports(
    method: Method,
    mesh: &UnitCellMesh,
    mesh_label: &str,
    config: &StudyConfig,
) -> Result<(Vec<DispersionReport>, f64, f64)> {
    let ops = assemble(method, mesh, &config.material)?;
    let an = DispersionAnalyzer::with_stable_step(&ops, &config.material, config.smax_grid, config.smax_tol)?;
    let grid = config.ne.clone().unwrap_or_else(|| default_ne_grid(method.degree()));
    if grid.is_empty() || grid.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::InvalidParameter("N_E grid must be nonempty and positive".into()));
    }
    let mut reports = Vec::with_capacity(grid.len());
    for ne in &grid {
        let lambda = wavelength_for(mesh, *ne);
        let wc = worst_case_over_directions(&an, lambda, &config.search)?;
        let cost = cost_model(&ops, &an, lambda);
        reports.push(DispersionReport {
            method: method.to_string(),
            material: config.material.kind().to_string(),
            mesh: mesh_label.to_string(),
            lambda,
            ne: *ne,
            e_disp: wc.e_disp,
            e_vec: wc.e_vec,
            dt: an.scheme.dt,
            n_dt: cost.n_dt,
            n_vec: cost.n_vec,
            n_mat: cost.n_mat,
            n_comp: cost.n_comp,
        });
    }
    Ok((reports, an.scheme.dt, an.scheme.s_max))
}

/// One method of a study: assembly, stable step, sweep over `N_E`, fits.
pub fn run_method(
    method: Method,
    mesh: &UnitCellMesh,
    mesh_label: &str,
    config: &StudyConfig,
) -> Result<(Vec<DispersionReport>, MethodFits)> {
    let (reports, dt, s_max) = sweep_reports(method, mesh, mesh_label, config)?;
    let p = method.degree() as f64;
    let disp: Vec<(f64, f64)> = reports.iter().map(|r| (r.ne, r.e_disp)).collect();
    let vecs: Vec<(f64, f64)> = reports.iter().map(|r| (r.ne, r.e_vec)).collect();
    let has_vec = vecs.iter().filter(|v| v.1 > 0.0).count() >= 3;
    let fits = MethodFits {
        method: method.to_string(),
        disp: fit_convergence(&disp)?,
        disp_nominal: fit_fixed_order(&disp, 2.0 * p)?,
        vec: if has_vec { Some(fit_convergence(&vecs)?) } else { None },
        vec_nominal: if has_vec {
            Some(fit_fixed_order(&vecs, p + 1.0)?)
        } else {
            None
        },
        dt,
        s_max,
    };
    Ok((reports, fits))
}

/// Runs every configured method; output ordered by method as configured.
pub fn run_study(config: &StudyConfig) -> Result<StudyResult> {
    if config.methods.is_empty() {
        return Err(Error::InvalidParameter("no methods configured".into()));
    }
    let mesh = config.mesh.build()?;
    let label = config.mesh.label();
    let per_method: Vec<_> = config
        .methods
        .par_iter()
        .map(|m| run_method(*m, &mesh, &label, config))
        .collect::<Result<_>>()?;
    let mut reports = Vec::new();
    let mut fits = Vec::new();
    for (r, f) in per_method {
        reports.extend(r);
        fits.push(f);
    }
    Ok(StudyResult { reports, fits })
}

/// `e_disp / e_disp,0` row by row against a baseline study with the same
/// methods and `N_E` grid.
pub fn relative_errors(study: &StudyResult, baseline: &StudyResult) -> Result<Vec<(String, f64, f64)>> {
    study
        .reports
        .iter()
        .map(|r| {
            let b = baseline
                .reports
                .iter()
                .find(|b| b.method == r.method && (b.ne - r.ne).abs() < 1e-12 * r.ne)
                .ok_or_else(|| {
                    Error::InvalidParameter(format!("no baseline row for {} at N_E = {}", r.method, r.ne))
                })?;
            Ok((r.method.clone(), r.ne, r.e_disp / b.e_disp))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_cube_cell, build_disphenoid_cell};

    #[test]
    fn hemisphere_points() {
        let d = fibonacci_hemisphere(200);
        assert_eq!(d.len(), 100);
        for v in &d {
            assert!((v.norm() - 1.0).abs() < 1e-14);
            assert!(v[2] > 0.0);
        }
    }

    #[test]
    fn ne_examples() {
        let cube = build_cube_cell();
        assert!((elements_per_wavelength(&cube, 1.0) - 6f64.cbrt()).abs() < 1e-12);
        let d = build_disphenoid_cell();
        let expect = (6.0 / (16.0f64 / 27.0).sqrt()).cbrt();
        assert!((elements_per_wavelength(&d, 1.0) - expect).abs() < 1e-12);
        assert!((expect - 1.983).abs() < 1e-3);
        assert!((elements_per_wavelength(&d, 2.0) - 2.0 * expect).abs() < 1e-12);
        assert!((wavelength_for(&d, elements_per_wavelength(&d, 0.7)) - 0.7).abs() < 1e-14);
    }

    #[test]
    fn exact_power_law_fit() {
        let s: Vec<(f64, f64)> = [3.0f64, 4.0, 6.0, 8.0, 11.0, 15.0]
            .iter()
            .map(|n| (*n, 2.0 * n.powf(-4.0)))
            .collect();
        let f = fit_convergence(&s).unwrap();
        assert!((f.alpha - 2.0).abs() < 1e-10 && (f.beta - 4.0).abs() < 1e-10);
        assert!(!f.non_monotone);
        let g = fit_fixed_order(&s, 4.0).unwrap();
        assert!((g.alpha - 2.0).abs() < 1e-10);
        assert!(fit_convergence(&s[..2]).is_err());
    }

    #[test]
    fn non_monotone_flag() {
        let s = vec![(1.0, 1.0), (2.0, 0.5), (3.0, 0.1), (4.0, 0.3), (5.0, 0.05), (6.0, 0.2)];
        assert!(fit_convergence(&s).unwrap().non_monotone);
    }

    #[test]
    fn required_ne_examples() {
        assert!((required_ne(2.87, 2.0, 0.01).unwrap() - 16.94).abs() < 0.01);
        assert!((required_ne(1.45, 2.0, 0.01).unwrap() - 12.04).abs() < 0.01);
        assert!((required_ne(3.3, 6.0, 3.3).unwrap() - 1.0).abs() < 1e-14);
        assert!(required_ne(1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn default_grid_spans_an_octave_in_the_finest_half() {
        for p in 1..=3 {
            let g = default_ne_grid(p);
            assert_eq!(g.len(), 8);
            assert!(g[7] / g[4] >= 2.0 - 1e-12);
        }
    }
}
