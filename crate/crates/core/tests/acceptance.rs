//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits with status 1 if any criterion fails. Numeric arguments restrict
//! the run to those criteria; other arguments (test-name filters meant for
//! the unit suites) skip the run unless one of them is `acceptance`.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::Vector3;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use tetdisp::assembly::{assemble, Method, PenaltyVariant};
use tetdisp::elements::RuleName;
use tetdisp::materials::MaterialModel;
use tetdisp::mesh::{build_disphenoid_cell, MeshSpec};
use tetdisp::published::Published;
use tetdisp::sweep::{
    default_ne_grid, elements_per_wavelength, method_reports, run_method, run_study, wavelength_for, MethodFits,
    SearchOptions, StudyConfig, StudyResult,
};
use tetdisp::symbol::{compute_ck, numerical_omega, TimeScheme};
use tetdisp::tables::cost_row;
use tetdisp::timedomain::{
    extremal_real_mode, initialize_plane_wave, lattice_mode, lw_step, stability_probe, verify_mode, PeriodicLattice,
};

use common::*;

type Verdict = Result<(bool, String), String>;

/// Direction search used for the elastic sweeps.
const ELASTIC_SEARCH: SearchOptions = SearchOptions {
    directions: 100,
    restarts: 1,
    max_evals: 30,
    tol: 1e-4,
};
const ELASTIC_SMAX_GRID: usize = 9;

/// Grid samples (indices into the default `N_E` grid) used for the
/// mesh-quality and P/S-ratio comparisons.
const RATIO_SAMPLES: [usize; 2] = [2, 5];

fn acoustic_study() -> &'static Result<StudyResult, String> {
    static CELL: OnceLock<Result<StudyResult, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = Instant::now();
        let cfg = StudyConfig::new(Method::all(), acoustic(), MeshSpec::Regular);
        let r = run_study(&cfg).map_err(|e| e.to_string());
        eprintln!("acoustic sweep: {:.0} s", t.elapsed().as_secs_f64());
        r
    })
}

fn elastic_study() -> &'static Result<StudyResult, String> {
    static CELL: OnceLock<Result<StudyResult, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = Instant::now();
        let mut cfg = StudyConfig::new(Method::all(), elastic(), MeshSpec::Regular);
        cfg.search = ELASTIC_SEARCH;
        cfg.smax_grid = ELASTIC_SMAX_GRID;
        let r = run_study(&cfg).map_err(|e| e.to_string());
        eprintln!("elastic sweep: {:.0} s", t.elapsed().as_secs_f64());
        r
    })
}

fn fits_of<'a>(study: &'a StudyResult, name: &str) -> Result<&'a MethodFits, String> {
    study
        .fits
        .iter()
        .find(|f| f.method == name)
        .ok_or_else(|| format!("no fit for {name}"))
}

fn published() -> Result<Published, String> {
    Published::load().map_err(|e| e.to_string())
}

fn criterion_1() -> Verdict {
    let c: Vec<f64> = (1..=3)
        .map(|k| compute_ck(k).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let pass = (c[0] - 4.0).abs() <= 1e-10 && (c[1] - 12.0).abs() <= 1e-10 && (c[2] - 7.57).abs() <= 0.005;
    Ok((
        pass,
        format!("c_1 = {:.12}, c_2 = {:.12}, c_3 = {:.6}", c[0], c[1], c[2]),
    ))
}

/// Eigenvalues of the dense `2×2×2` periodic operator `M⁻¹A`, through
/// `L⁻¹ A L⁻ᵀ` with `M = L Lᵀ`.
fn global_spectrum(ops: &tetdisp::assembly::LocalOperatorSet) -> Result<Vec<f64>, String> {
    let lattice = PeriodicLattice::new(ops, 2).map_err(|e| e.to_string())?;
    let (a, m) = lattice.dense_operators();
    let chol = m.cholesky().ok_or("global mass is not positive definite")?;
    let l = chol.l();
    let x = l.solve_lower_triangular(&a).ok_or("singular mass factor")?;
    let c = l.solve_lower_triangular(&x.transpose()).ok_or("singular mass factor")?;
    let n = c.nrows();
    let sym = faer::Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let mut ev = sym
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| format!("{e:?}"))?;
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

fn criterion_2() -> Verdict {
    let mut worst: (f64, String) = (0.0, String::new());
    for (m, ops, op) in acoustic_symbols() {
        let global = global_spectrum(ops)?;
        let lattice = PeriodicLattice::new(ops, 2).map_err(|e| e.to_string())?;
        let mut union = Vec::with_capacity(global.len());
        for i in 0..8 {
            let z = [i & 1, (i >> 1) & 1, (i >> 2) & 1];
            let kappa = lattice.wave_vector(z).map_err(|e| e.to_string())?;
            union.extend(op.eigenvalues(&kappa).map_err(|e| e.to_string())?);
        }
        union.sort_by(|a, b| a.total_cmp(b));
        let d = spectrum_distance(&global, &union);
        if d >= worst.0 {
            worst = (d, m.to_string());
        }
    }
    Ok((
        worst.0 <= 1e-9,
        format!(
            "largest spectral mismatch {:.2e} ({}), relative to the spectral radius",
            worst.0, worst.1
        ),
    ))
}

fn criterion_3() -> Verdict {
    let study = acoustic_study().as_ref()?;
    let p = published()?;
    let mut pass = true;
    let mut worst_a: (f64, String) = (0.0, String::new());
    let mut worst_b: (f64, String) = (0.0, String::new());
    for f in &study.fits {
        let m: Method = f.method.parse().map_err(|e: tetdisp::Error| e.to_string())?;
        let pubf = p.fit(false, &f.method).ok_or("missing published fit")?;
        let da = (f.disp_nominal.alpha - pubf.disp_alpha).abs() / pubf.disp_alpha;
        let db = (f.disp.beta - 2.0 * m.degree() as f64).abs();
        pass &= da <= 0.15 && db <= 0.1;
        if da >= worst_a.0 {
            worst_a = (da, f.method.clone());
        }
        if db >= worst_b.0 {
            worst_b = (db, f.method.clone());
        }
    }
    Ok((
        pass,
        format!(
            "worst alpha deviation {:.1}% ({}), worst |beta - 2p| {:.3} ({})",
            100.0 * worst_a.0,
            worst_a.1,
            worst_b.0,
            worst_b.1
        ),
    ))
}

fn criterion_4() -> Verdict {
    let study = acoustic_study().as_ref()?;
    let p = published()?;
    let mesh = build_disphenoid_cell();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["DG1a", "ML1", "ML2", "DG3a"] {
        let f = fits_of(study, name)?;
        let r = cost_row(f, 0.01, &mesh, &acoustic(), &SearchOptions::default(), &p).map_err(|e| e.to_string())?;
        let ok = (r.ne - r.ne_published).abs() <= 1.0
            && (r.n_vec - r.n_vec_published).abs() <= 0.1 * r.n_vec_published
            && (r.n_mat - r.n_mat_published).abs() <= 0.1 * r.n_mat_published
            && (r.n_dt - r.n_dt_published).abs() <= 2.0;
        pass &= ok;
        parts.push(format!(
            "{name} N_E {:.2} n_vec {:.0} n_mat {:.3e} N_dt {:.1}",
            r.ne, r.n_vec, r.n_mat, r.n_dt
        ));
    }
    Ok((pass, parts.join("; ")))
}

fn criterion_5() -> Verdict {
    let study = elastic_study().as_ref()?;
    let p = published()?;
    let mut pass = true;
    let mut parts = Vec::new();
    for f in &study.fits {
        let m: Method = f.method.parse().map_err(|e: tetdisp::Error| e.to_string())?;
        let pubf = p.fit(true, &f.method).ok_or("missing published fit")?;
        let da = (f.disp_nominal.alpha - pubf.disp_alpha).abs() / pubf.disp_alpha;
        let db = (f.disp.beta - 2.0 * m.degree() as f64).abs();
        pass &= da <= 0.2 && db <= 0.15;
        parts.push(format!("{} {:.2}/{:.2}", f.method, f.disp_nominal.alpha, f.disp.beta));
    }
    Ok((pass, format!("alpha/beta: {}", parts.join(", "))))
}

fn criterion_6() -> Verdict {
    let study = acoustic_study().as_ref()?;
    // ML1: zero at every sampled wave vector, not only the worst one.
    let mesh = build_disphenoid_cell();
    let ml1 = Method::MassLumped(RuleName::ML1);
    let ops = assemble(ml1, &mesh, &acoustic()).map_err(|e| e.to_string())?;
    let an = tetdisp::dispersion::DispersionAnalyzer::with_stable_step(&ops, &acoustic(), 17, 1e-6)
        .map_err(|e| e.to_string())?;
    let dirs = tetdisp::sweep::fibonacci_hemisphere(200);
    let mut ml1_max: f64 = 0.0;
    for ne in default_ne_grid(1) {
        let k = 2.0 * std::f64::consts::PI / wavelength_for(&mesh, ne);
        for d in &dirs {
            ml1_max = ml1_max.max(an.errors(&(d * k)).map_err(|e| e.to_string())?.e_vec);
        }
    }
    let mut pass = ml1_max == 0.0;
    let mut worst: (f64, String) = (0.0, String::new());
    for f in study.fits.iter().filter(|f| f.method != "ML1") {
        let m: Method = f.method.parse().map_err(|e: tetdisp::Error| e.to_string())?;
        let beta = f
            .vec
            .map(|v| v.beta)
            .ok_or(format!("{} has no eigenvector fit", f.method))?;
        let d = (beta - (m.degree() + 1) as f64).abs();
        pass &= d <= 0.15;
        if d >= worst.0 {
            worst = (d, f.method.clone());
        }
    }
    Ok((
        pass,
        format!(
            "ML1 max e_vec over {} samples = {ml1_max:e}; worst |beta_vec - (p+1)| {:.3} ({})",
            dirs.len() * 8,
            worst.0,
            worst.1
        ),
    ))
}

fn criterion_7() -> Verdict {
    let study = acoustic_study().as_ref()?;
    let published = published()?;
    // dt ratio implied by the cost tables: dt is proportional to N_E / N_dt.
    let tabulated = |p: usize| -> Result<Vec<f64>, String> {
        [0.01, 0.001]
            .iter()
            .map(|t| {
                let rows = &published.cost_table(*t).map_err(|e| e.to_string())?.rows;
                let q = |v: &str| {
                    rows.iter()
                        .find(|r| r.method == format!("DG{p}{v}"))
                        .map(|r| r.ne / r.n_dt)
                        .ok_or("missing published row")
                };
                Ok(q("a")? / q("b")?)
            })
            .collect()
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for p in 1..=3 {
        let a = fits_of(study, &format!("DG{p}a"))?;
        let b = fits_of(study, &format!("DG{p}b"))?;
        let ratio = a.dt / b.dt;
        let smaller = a.disp_nominal.alpha < b.disp_nominal.alpha;
        pass &= (1.2..=1.8).contains(&ratio) && smaller;
        let t = tabulated(p)?;
        parts.push(format!(
            "DG{p} dt ratio {ratio:.3} (tabulated {:.2}/{:.2}), alpha {:.2} vs {:.2}",
            t[0], t[1], a.disp_nominal.alpha, b.disp_nominal.alpha
        ));
    }
    Ok((pass, parts.join("; ")))
}

/// `e_disp` on `spec` over `e_disp` on the regular mesh at the same wavelengths.
fn growth_factors(
    spec: MeshSpec,
    material: &MaterialModel,
    base: &StudyResult,
    search: SearchOptions,
    smax_grid: usize,
) -> Result<Vec<(String, f64, f64)>, String> {
    let regular = build_disphenoid_cell();
    let mesh = spec.build().map_err(|e| e.to_string())?;
    let rows: Vec<Vec<(String, f64, f64)>> = Method::all()
        .par_iter()
        .map(|m| {
            let grid = default_ne_grid(m.degree());
            let base_ne: Vec<f64> = RATIO_SAMPLES.iter().map(|i| grid[*i]).collect();
            let ne: Vec<f64> = base_ne
                .iter()
                .map(|n| elements_per_wavelength(&mesh, wavelength_for(&regular, *n)))
                .collect();
            let mut cfg = StudyConfig::new(vec![*m], material.clone(), spec);
            cfg.ne = Some(ne);
            cfg.search = search;
            cfg.smax_grid = smax_grid;
            let reports = method_reports(*m, &mesh, &spec.label(), &cfg).map_err(|e| e.to_string())?;
            reports
                .iter()
                .zip(&base_ne)
                .map(|(r, n)| {
                    let b = base
                        .reports
                        .iter()
                        .find(|b| b.method == r.method && (b.ne - n).abs() <= 1e-12 * n)
                        .ok_or(format!("no baseline row for {} at {n}", r.method))?;
                    Ok((r.method.clone(), *n, r.e_disp / b.e_disp))
                })
                .collect()
        })
        .collect::<Result<_, String>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn distorted_grid(p: usize) -> Vec<f64> {
    if p < 3 {
        default_ne_grid(p)
    } else {
        (0..4).map(|i| 8.0 * 3f64.powf(i as f64 / 3.0)).collect()
    }
}

fn criterion_8() -> Verdict {
    let base = acoustic_study().as_ref()?;
    let search = SearchOptions::default();
    let half = growth_factors(MeshSpec::ZScaled { tz: 0.5 }, &acoustic(), base, search, 17)?;
    let tenth = growth_factors(MeshSpec::ZScaled { tz: 0.1 }, &acoustic(), base, search, 17)?;
    let max_half = half.iter().map(|r| r.2).fold(0.0, f64::max);
    let (lo, hi) = tenth
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r.2), hi.max(r.2)));
    let worst_half = half
        .iter()
        .max_by(|a, b| a.2.total_cmp(&b.2))
        .map(|r| r.0.clone())
        .unwrap_or_default();
    let mut pass = max_half <= 2.5 && lo >= 10.0 && hi <= 100.0;

    let t = Instant::now();
    let spec = MeshSpec::Distorted { delta: 0.9 };
    let mesh = spec.build().map_err(|e| e.to_string())?;
    let fits: Vec<MethodFits> = Method::all()
        .par_iter()
        .map(|m| {
            let mut cfg = StudyConfig::new(vec![*m], acoustic(), spec);
            cfg.ne = Some(distorted_grid(m.degree()));
            cfg.search = SearchOptions {
                directions: 26,
                restarts: 0,
                max_evals: 0,
                tol: 1e-4,
            };
            cfg.smax_grid = 5;
            cfg.smax_tol = 1e-3;
            run_method(*m, &mesh, &spec.label(), &cfg)
                .map(|r| r.1)
                .map_err(|e| e.to_string())
        })
        .collect::<Result<_, String>>()?;
    eprintln!("distorted sweep: {:.0} s", t.elapsed().as_secs_f64());
    let mut orders = Vec::new();
    for f in &fits {
        let m: Method = f.method.parse().map_err(|e: tetdisp::Error| e.to_string())?;
        let p = m.degree() as f64;
        let ok_disp = (f.disp.beta - 2.0 * p).abs() <= 0.1;
        let ok_vec = f.vec.map(|v| (v.beta - (p + 1.0)).abs() <= 0.15).unwrap_or(true);
        pass &= ok_disp && ok_vec;
        orders.push(format!(
            "{} {:.2}/{}",
            f.method,
            f.disp.beta,
            f.vec.map(|v| format!("{:.2}", v.beta)).unwrap_or_else(|| "0".into())
        ));
    }
    Ok((
        pass,
        format!(
            "T_z=0.5 max growth {max_half:.2} ({worst_half}); T_z=0.1 growth in [{lo:.1}, {hi:.1}]; delta=0.9 orders disp/vec: {}",
            orders.join(", ")
        ),
    ))
}

fn criterion_9() -> Verdict {
    let base = elastic_study().as_ref()?;
    // c_P/c_S = 10 with ρ = μ = 1.
    let material = MaterialModel::elastic(1.0, 98.0, 1.0).map_err(|e| e.to_string())?;
    let rows = growth_factors(MeshSpec::Regular, &material, base, ELASTIC_SEARCH, ELASTIC_SMAX_GRID)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for m in Method::all() {
        let name = m.to_string();
        let r: Vec<f64> = rows.iter().filter(|r| r.0 == name).map(|r| r.2).collect();
        let (lo, hi) = r
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        let ok = match m {
            Method::Dg { .. } => hi <= 1.5,
            Method::MassLumped(RuleName::ML1) => lo >= 25.0 && hi <= 55.0,
            Method::MassLumped(_) => lo >= 2.0 && hi <= 5.0,
        };
        pass &= ok;
        parts.push(format!("{name} {lo:.2}..{hi:.2}"));
    }
    Ok((pass, format!("error ratios: {}", parts.join(", "))))
}

fn criterion_10() -> Verdict {
    let study = acoustic_study().as_ref()?;
    let symbols = acoustic_symbols();
    let mut rng = StdRng::seed_from_u64(0x7e7d15);
    let n = 4;
    let mut worst_freq: f64 = 0.0;
    let mut worst_rev: f64 = 0.0;
    let mut triples = Vec::new();
    for _ in 0..10 {
        let i = rng.random_range(0..symbols.len());
        let (m, ops, op) = &symbols[i];
        let z = loop {
            let z = [rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n)];
            if z != [0, 0, 0] {
                break z;
            }
        };
        let mode = rng.random_range(0..op.n0());
        let fits = fits_of(study, &m.to_string())?;
        let stable = TimeScheme::new(m.degree(), fits.s_max).map_err(|e| e.to_string())?;
        // At least eight steps per period so the phase is not aliased.
        let lattice = PeriodicLattice::new(ops, n).map_err(|e| e.to_string())?;
        let lm = lattice_mode(&lattice, op, z, mode).map_err(|e| e.to_string())?;
        let theta = numerical_omega(lm.s, stable.dt, stable.k).map_err(|e| e.to_string())? * stable.dt;
        let dt = if theta > std::f64::consts::FRAC_PI_4 {
            stable.dt * std::f64::consts::FRAC_PI_4 / theta
        } else {
            stable.dt
        };
        let scheme = TimeScheme::with_dt(stable.k, stable.s_max, dt).map_err(|e| e.to_string())?;
        let r = verify_mode(ops, &scheme, n, z, mode, None).map_err(|e| e.to_string())?;
        worst_freq = worst_freq.max(r.rel_err.ok_or("no frequency measured")?);

        let mut st = initialize_plane_wave(&lattice, &lm, &scheme).map_err(|e| e.to_string())?;
        let (u0, u1) = (st.prev.clone(), st.curr.clone());
        for _ in 0..200 {
            lw_step(&lattice, &mut st, scheme.k);
        }
        st.reverse();
        for _ in 0..200 {
            lw_step(&lattice, &mut st, scheme.k);
        }
        let scale = u0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let err = st
            .curr
            .iter()
            .zip(&u0)
            .chain(st.prev.iter().zip(&u1))
            .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        worst_rev = worst_rev.max(err / scale);
        triples.push(format!("{m}:{z:?}:{mode}"));
    }

    let mut probes = Vec::new();
    let mut probes_ok = true;
    for m in [
        Method::MassLumped(RuleName::ML1),
        Method::Dg {
            degree: 2,
            penalty: PenaltyVariant::Eigenvalue,
        },
        Method::MassLumped(RuleName::ML3b),
    ] {
        let (_, ops, op) = symbols.iter().find(|s| s.0 == m).ok_or("method missing")?;
        let fits = fits_of(study, &m.to_string())?;
        let lattice = PeriodicLattice::new(ops, 2).map_err(|e| e.to_string())?;
        let (z, mode, s) = extremal_real_mode(op, &ops.transform, 2).map_err(|e| e.to_string())?;
        let near = (s - fits.s_max).abs() <= 1e-6 * fits.s_max;
        let above =
            stability_probe(&lattice, op, z, mode, m.degree(), 1.001 * fits.dt, 1000).map_err(|e| e.to_string())?;
        let below =
            stability_probe(&lattice, op, z, mode, m.degree(), 0.999 * fits.dt, 1000).map_err(|e| e.to_string())?;
        let ok = near && !above.bounded && above.growth > 1e2 && below.bounded;
        probes_ok &= ok;
        probes.push(format!("{m} growth {:.1e}/{:.6}", above.growth, below.growth));
    }
    let pass = worst_freq <= 1e-8 && worst_rev <= 1e-10 && probes_ok;
    Ok((
        pass,
        format!(
            "max rel omega error {worst_freq:.1e}, max reversal error {worst_rev:.1e} over [{}]; probes 1.001x/0.999x: {}",
            triples.join(" "),
            probes.join(", ")
        ),
    ))
}

fn criterion_11() -> Verdict {
    let mut fails = Vec::new();
    let kappas: Vec<Vector3<f64>> = [
        [0.3, -1.2, 2.1],
        [2.9, 0.4, -0.7],
        [-3.5, 1.6, 0.2],
        [0.05, 0.02, -0.04],
        [1.0, 1.0, 1.0],
    ]
    .iter()
    .map(|k| Vector3::new(k[0], k[1], k[2]))
    .collect();
    let mut herm: f64 = 0.0;
    for (_, _, op) in acoustic_symbols().iter().chain(elastic_symbols()) {
        for k in &kappas {
            herm = herm.max(hermitian_defect(op, k));
        }
    }
    if herm > 1e-13 {
        fails.push(format!("hermitian defect {herm:e}"));
    }
    let mut kernel: (f64, f64) = (0.0, f64::INFINITY);
    for (_, _, op) in acoustic_symbols().iter().chain(elastic_symbols()) {
        let (z, g) = kernel_at_zero(op);
        kernel = (kernel.0.max(z), kernel.1.min(g));
    }
    if kernel.0 > 1e-12 || kernel.1 < 1e-6 {
        fails.push(format!("kernel {kernel:?}"));
    }
    if !lumped_weights_positive() {
        fails.push("nonpositive lumped weight".into());
    }
    let mut quad: f64 = 0.0;
    for d in 0..=12usize {
        for a in 0..=d as u32 {
            for b in 0..=d as u32 - a {
                quad = quad.max(triangle_rule_error(d, [a, b]));
                for c in 0..=d as u32 - a - b {
                    quad = quad.max(tet_rule_error(d, [a, b, c]));
                }
            }
        }
    }
    for r in [RuleName::ML1, RuleName::ML2, RuleName::ML3a, RuleName::ML3b] {
        quad = quad.max(lumped_rule_error(r));
    }
    if quad > 1e-12 {
        fails.push(format!("quadrature error {quad:e}"));
    }
    let mut basis: f64 = 0.0;
    for p in 1..=3 {
        for k in &kappas {
            basis = basis.max(basis_invariance_defect(p, k));
        }
    }
    if basis > 1e-9 {
        fails.push(format!("basis dependence {basis:e}"));
    }
    Ok((
        fails.is_empty(),
        if fails.is_empty() {
            format!(
                "hermitian {herm:.1e}, kernel {:.1e} (gap {:.1e}), weights positive, quadrature {quad:.1e}, DG basis {basis:.1e}",
                kernel.0, kernel.1
            )
        } else {
            fails.join("; ")
        },
    ))
}

const CRITERIA: [(u32, &str, fn() -> Verdict); 11] = [
    (1, "stability constants c_K", criterion_1),
    (2, "symbol vs global 2x2x2 operator", criterion_2),
    (3, "acoustic fits", criterion_3),
    (4, "cost rows at e_disp = 0.01", criterion_4),
    (5, "elastic fits (c_P/c_S = 2)", criterion_5),
    (6, "eigenvector error structure", criterion_6),
    (7, "penalty comparison", criterion_7),
    (8, "mesh quality", criterion_8),
    (9, "P/S ratio 10 vs 2", criterion_9),
    (10, "time-domain verification", criterion_10),
    (11, "property checks", criterion_11),
];

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected: BTreeSet<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let filters: Vec<&String> = args.iter().filter(|a| a.parse::<u32>().is_err()).collect();
    if !filters.is_empty() && !filters.iter().any(|f| f.as_str() == "acceptance") {
        println!("acceptance: skipped (filtered)");
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    for (id, title, run) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match run() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {title}: {detail} [{:.0} s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
