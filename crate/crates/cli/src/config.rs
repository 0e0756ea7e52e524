//! Experiment configuration: TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use tetdisp::assembly::{Method, PenaltyVariant};
use tetdisp::dispersion::{DEFAULT_SMAX_GRID, DEFAULT_SMAX_TOL};
use tetdisp::materials::MaterialModel;
use tetdisp::mesh::MeshSpec;
use tetdisp::sweep::{elements_per_wavelength, SearchOptions, StudyConfig};

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub methods: Option<Vec<String>>,
    pub penalty: Option<String>,
    pub mesh: Option<String>,
    pub ne: Option<Vec<f64>>,
    pub wavelengths: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub material: MaterialFile,
    #[serde(default)]
    pub search: SearchFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialFile {
    pub kind: Option<String>,
    pub rho: Option<f64>,
    pub c: Option<f64>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub ps_ratio: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchFile {
    pub directions: Option<usize>,
    pub restarts: Option<usize>,
    pub max_evals: Option<usize>,
    pub tol: Option<f64>,
    pub smax_grid: Option<usize>,
    pub smax_tol: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Material selection shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct MaterialArgs {
    /// Wave model: acoustic or elastic.
    #[arg(long)]
    pub material: Option<String>,
    /// Density (acoustic: scaled density; elastic: ρ).
    #[arg(long)]
    pub rho: Option<f64>,
    /// Acoustic wave speed.
    #[arg(long)]
    pub c: Option<f64>,
    /// First Lamé parameter.
    #[arg(long = "lame-lambda")]
    pub lame_lambda: Option<f64>,
    /// Shear modulus.
    #[arg(long)]
    pub mu: Option<f64>,
    /// P/S speed ratio with ρ = μ = 1 (sets λ = r² - 2).
    #[arg(long = "ps-ratio")]
    pub ps_ratio: Option<f64>,
}

impl MaterialArgs {
    pub fn resolve(&self, file: &MaterialFile) -> Result<MaterialModel, CliError> {
        let kind = self
            .material
            .clone()
            .or_else(|| file.kind.clone())
            .unwrap_or_else(|| "acoustic".into());
        let rho = self.rho.or(file.rho).unwrap_or(1.0);
        let model = match kind.trim().to_ascii_lowercase().as_str() {
            "acoustic" => MaterialModel::acoustic(rho, self.c.or(file.c).unwrap_or(1.0)),
            "elastic" => {
                let mu = self.mu.or(file.mu).unwrap_or(1.0);
                let lambda = match (self.lame_lambda, self.ps_ratio) {
                    (Some(l), _) => l,
                    (None, Some(r)) => r * r - 2.0,
                    (None, None) => match (file.lambda, file.ps_ratio) {
                        (Some(l), _) => l,
                        (None, Some(r)) => r * r - 2.0,
                        (None, None) => 2.0,
                    },
                };
                if self.ps_ratio.is_some() || (self.lame_lambda.is_none() && file.ps_ratio.is_some()) {
                    if rho != 1.0 || mu != 1.0 {
                        return Err(CliError::Usage("ps-ratio assumes rho = mu = 1".into()));
                    }
                }
                MaterialModel::elastic(rho, lambda, mu)
            }
            other => return Err(CliError::Usage(format!("unknown material '{other}'"))),
        };
        model.map_err(|e| CliError::Usage(e.to_string()))
    }
}

/// Direction search and spectral-radius settings.
#[derive(Args, Debug, Clone, Default)]
pub struct SearchArgs {
    /// Fibonacci directions on the full sphere (half are evaluated).
    #[arg(long)]
    pub directions: Option<usize>,
    /// Nelder–Mead refinements started from the best grid directions.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Objective evaluations per refinement.
    #[arg(long = "max-evals")]
    pub max_evals: Option<usize>,
    /// Relative objective tolerance of the refinement.
    #[arg(long = "search-tol")]
    pub tol: Option<f64>,
    /// Grid points per axis of the spectral-radius search.
    #[arg(long = "smax-grid")]
    pub smax_grid: Option<usize>,
    /// Relative tolerance of the spectral-radius refinement.
    #[arg(long = "smax-tol")]
    pub smax_tol: Option<f64>,
}

impl SearchArgs {
    pub fn resolve(&self, file: &SearchFile) -> Result<(SearchOptions, usize, f64), CliError> {
        let d = SearchOptions::default();
        let search = SearchOptions {
            directions: self.directions.or(file.directions).unwrap_or(d.directions),
            restarts: self.restarts.or(file.restarts).unwrap_or(d.restarts),
            max_evals: self.max_evals.or(file.max_evals).unwrap_or(d.max_evals),
            tol: self.tol.or(file.tol).unwrap_or(d.tol),
        };
        let grid = self.smax_grid.or(file.smax_grid).unwrap_or(DEFAULT_SMAX_GRID);
        let tol = self.smax_tol.or(file.smax_tol).unwrap_or(DEFAULT_SMAX_TOL);
        if search.directions < 2 || grid < 2 || !(search.tol > 0.0) || !(tol > 0.0) {
            return Err(CliError::Usage(
                "search settings must be positive (directions, smax-grid >= 2)".into(),
            ));
        }
        Ok((search, grid, tol))
    }
}

/// Parses a comma-separated method list, applying a penalty override to DG entries.
pub fn parse_methods(names: &[String], penalty: Option<&str>) -> Result<Vec<Method>, CliError> {
    let penalty: Option<PenaltyVariant> = penalty
        .map(|p| p.parse().map_err(|e: tetdisp::Error| CliError::Usage(e.to_string())))
        .transpose()?;
    let mut out = Vec::new();
    for name in names
        .iter()
        .flat_map(|n| n.split(','))
        .map(str::trim)
        .filter(|n| !n.is_empty())
    {
        let mut m: Method = if name.eq_ignore_ascii_case("all") {
            out.extend(Method::all());
            continue;
        } else {
            name.parse()
                .map_err(|e: tetdisp::Error| CliError::Usage(e.to_string()))?
        };
        if let (Method::Dg { penalty: p, .. }, Some(v)) = (&mut m, penalty) {
            *p = v;
        }
        out.push(m);
    }
    if out.is_empty() {
        return Err(CliError::Usage("no methods given".into()));
    }
    Ok(out)
}

pub fn parse_mesh(s: &str) -> Result<MeshSpec, CliError> {
    s.parse().map_err(|e: tetdisp::Error| CliError::Usage(e.to_string()))
}

fn check_grid(name: &str, g: &[f64]) -> Result<(), CliError> {
    if g.is_empty() || g.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(CliError::Usage(format!("{name} grid must be nonempty and positive")));
    }
    Ok(())
}

/// Fully resolved inputs of `analyze`.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub study: StudyConfig,
    pub out: PathBuf,
}

pub struct AnalyzeInputs<'a> {
    pub file: FileConfig,
    pub methods: &'a [String],
    pub penalty: Option<&'a str>,
    pub mesh: Option<&'a str>,
    pub ne: Option<&'a [f64]>,
    pub wavelengths: Option<&'a [f64]>,
    pub out: Option<&'a Path>,
    pub material: &'a MaterialArgs,
    pub search: &'a SearchArgs,
}

impl ExperimentConfig {
    pub fn resolve(i: AnalyzeInputs<'_>) -> Result<Self, CliError> {
        let file = i.file;
        let names: Vec<String> = if i.methods.is_empty() {
            file.methods.clone().unwrap_or_default()
        } else {
            i.methods.to_vec()
        };
        let penalty = i.penalty.map(str::to_string).or(file.penalty.clone());
        let methods = parse_methods(&names, penalty.as_deref())?;
        let mesh = parse_mesh(i.mesh.or(file.mesh.as_deref()).unwrap_or("regular"))?;
        let material = i.material.resolve(&file.material)?;
        let (search, smax_grid, smax_tol) = i.search.resolve(&file.search)?;
        let ne = i.ne.map(<[f64]>::to_vec).or(file.ne.clone());
        let wl = i.wavelengths.map(<[f64]>::to_vec).or(file.wavelengths.clone());
        let ne = match (ne, wl) {
            (Some(_), Some(_)) => {
                return Err(CliError::Usage(
                    "give either an N_E grid or a wavelength grid, not both".into(),
                ))
            }
            (Some(ne), None) => {
                check_grid("N_E", &ne)?;
                Some(ne)
            }
            (None, Some(wl)) => {
                check_grid("wavelength", &wl)?;
                let cell = mesh.build().map_err(|e| CliError::Usage(e.to_string()))?;
                Some(wl.iter().map(|l| elements_per_wavelength(&cell, *l)).collect())
            }
            (None, None) => None,
        };
        let mut study = StudyConfig::new(methods, material, mesh);
        study.ne = ne;
        study.search = search;
        study.smax_grid = smax_grid;
        study.smax_tol = smax_tol;
        let out = i
            .out
            .map(Path::to_path_buf)
            .or(file.out)
            .unwrap_or_else(|| PathBuf::from("out"));
        Ok(Self { study, out })
    }
}
