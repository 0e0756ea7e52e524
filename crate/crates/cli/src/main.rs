use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use tetdisp::assembly::{assemble, Method};
use tetdisp::elements::mass_lumped_rule;
use tetdisp::materials::{MaterialKind, MaterialModel};
use tetdisp::published::Published;
use tetdisp::sweep::{run_study, SearchOptions, StudyConfig, StudyResult};
use tetdisp::symbol::{spectral_radius_max, SymbolOperator, TimeScheme};
use tetdisp::tables::{cost_row, fit_table};
use tetdisp::timedomain::{extremal_real_mode, verify_mode};

mod config;

use config::{
    parse_mesh, parse_methods, AnalyzeInputs, ExperimentConfig, FileConfig, MaterialArgs, MaterialFile, SearchArgs,
    SearchFile,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Compute(tetdisp::Error),
    Io(String),
    /// Stdout was closed by the reader.
    ClosedPipe,
}

macro_rules! out {
    ($($t:tt)*) => {
        writeln!(std::io::stdout().lock(), $($t)*)?
    };
}

impl From<tetdisp::Error> for CliError {
    fn from(e: tetdisp::Error) -> Self {
        CliError::Compute(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return CliError::ClosedPipe;
        }
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

const REPORT_HELP: &str = "\
Output (under --out):
  reports.csv   one row per method and N_E sample, columns in this order:
    method     method name (DG1a ... ML3b)
    material   acoustic or elastic
    mesh       regular, zscale:<tz> or distorted:<delta>
    lambda     wavelength in mesh units
    ne         elements per wavelength
    e_disp     worst-case relative dispersion error over directions
    e_vec      eigenvector error at the worst dispersion direction
    dt         stable Lax-Wendroff step for unit wave speed
    n_dt       time steps per wavelength travelled
    n_vec      degrees of freedom per cubic wavelength
    n_mat      nonzero global matrix entries per cubic wavelength
    n_comp     n_mat * n_dt * K with K = p
  fits.json     per-method fits e = alpha * N_E^-beta (free and nominal order)";

const TABLE_HELP: &str = "\
Tables:
  2  acoustic fits: method, disp_alpha, disp_beta, disp_alpha_published,
     disp_beta_published, disp_alpha_rel_dev, vec_alpha, vec_beta,
     vec_alpha_published, vec_beta_published, vec_alpha_rel_dev
  3  acoustic cost at e_disp = 0.01: method, ne, n_vec, n_mat, n_dt, n_comp,
     e_vec, then the published value of each (suffix _published) and the
     relative deviations n_vec_rel_dev, n_mat_rel_dev, n_comp_rel_dev
  4  as 3 at e_disp = 0.001
  5  elastic fits (c_P/c_S = 2), columns as 2
  6  alias of 5
Alphas are evaluated at the nominal orders 2p and p+1; betas are free fits.";

#[derive(Parser, Debug)]
#[command(
    name = "tetdisp",
    version,
    about = "Dispersion, eigenvector error and cost of explicit finite element methods on periodic tetrahedral meshes"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep N_E for each method and write reports.csv and fits.json.
    #[command(after_help = REPORT_HELP)]
    Analyze(AnalyzeArgs),
    /// Regenerate a fit or cost table next to the published values.
    #[command(after_help = TABLE_HELP)]
    Tables(TablesArgs),
    /// Time-domain check of one symbol eigenmode on an N³ periodic lattice.
    Verify(VerifyArgs),
    /// Print the unit cell as JSON.
    DumpMesh(MeshArgs),
    /// Print the cell mass matrix and coupling blocks as JSON.
    DumpOperators(OperatorArgs),
    /// List the methods and the mass-lumped quadrature rules.
    ListElements,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// TOML experiment file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Methods, comma separated (e.g. ML1,DG2a) or "all".
    #[arg(long = "method", value_delimiter = ',')]
    methods: Vec<String>,
    /// DG penalty variant applied to every DG method: 6a (eigenvalue) or 6b (inscribed sphere).
    #[arg(long)]
    penalty: Option<String>,
    /// regular, zscale:<tz> or distorted:<delta>.
    #[arg(long)]
    mesh: Option<String>,
    /// Elements-per-wavelength samples.
    #[arg(long, value_delimiter = ',', conflicts_with = "wavelengths")]
    ne: Option<Vec<f64>>,
    /// Wavelength samples (alternative to --ne).
    #[arg(long, value_delimiter = ',')]
    wavelengths: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    material: MaterialArgs,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args, Debug)]
struct TablesArgs {
    /// Table number: 2, 3, 4, 5 or 6.
    #[arg(value_parser = clap::value_parser!(u8).range(2..=6))]
    which: u8,
    /// Restrict to these methods (default: all ten).
    #[arg(long = "method", value_delimiter = ',')]
    methods: Vec<String>,
    /// Directory for table_<n>.csv; the table is also printed to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    search: SearchArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    method: String,
    #[command(flatten)]
    material: MaterialArgs,
    #[arg(long, default_value = "regular")]
    mesh: String,
    /// Lattice size N (cells per direction).
    #[arg(long, default_value_t = 4)]
    lattice: usize,
    /// Wave index z (κ = 2π T⁻ᵀ z / N), comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,0,0")]
    z: Vec<usize>,
    /// Mode index in ascending eigenvalue order.
    #[arg(long, default_value_t = 0)]
    mode: usize,
    /// Use the largest eigenvalue among the real lattice modes instead of --z/--mode.
    #[arg(long)]
    extremal: bool,
    /// Number of steps (default: about three periods).
    #[arg(long)]
    steps: Option<usize>,
    /// Multiple of the stable step.
    #[arg(long = "dt-factor", default_value_t = 1.0)]
    dt_factor: f64,
    #[arg(long = "smax-grid", default_value_t = tetdisp::dispersion::DEFAULT_SMAX_GRID)]
    smax_grid: usize,
}

#[derive(Args, Debug)]
struct MeshArgs {
    #[arg(long, default_value = "regular")]
    mesh: String,
}

#[derive(Args, Debug)]
struct OperatorArgs {
    #[arg(long)]
    method: String,
    #[command(flatten)]
    material: MaterialArgs,
    #[arg(long, default_value = "regular")]
    mesh: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Tables(t) => cmd_tables(t),
        Command::Verify(v) => cmd_verify(v),
        Command::DumpMesh(m) => cmd_dump_mesh(m),
        Command::DumpOperators(o) => cmd_dump_operators(o),
        Command::ListElements => cmd_list_elements(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Compute(e)) => {
            eprintln!("computation failed: {e}");
            ExitCode::from(1)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("output error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::ClosedPipe) => ExitCode::SUCCESS,
    }
}

fn write_csv<T: Serialize>(path: Option<&Path>, rows: &[T]) -> Result<(), CliError> {
    let mut buf = csv::Writer::from_writer(Vec::new());
    for r in rows {
        buf.serialize(r)?;
    }
    let bytes = buf.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    match path {
        Some(p) => fs::write(p, &bytes)?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct FitsSummary<'a> {
    material: serde_json::Value,
    mesh: String,
    search: SearchOptions,
    smax_grid: usize,
    smax_tol: f64,
    fits: &'a [tetdisp::sweep::MethodFits],
}

fn material_json(m: &MaterialModel) -> serde_json::Value {
    let mut o = serde_json::Map::new();
    let kind = match m.kind() {
        MaterialKind::Acoustic => "acoustic",
        MaterialKind::Elastic => "elastic",
    };
    o.insert("kind".into(), kind.into());
    for (k, v) in m.params() {
        o.insert(k.clone(), (*v).into());
    }
    serde_json::Value::Object(o)
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let file = match &a.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let cfg = ExperimentConfig::resolve(AnalyzeInputs {
        file,
        methods: &a.methods,
        penalty: a.penalty.as_deref(),
        mesh: a.mesh.as_deref(),
        ne: a.ne.as_deref(),
        wavelengths: a.wavelengths.as_deref(),
        out: a.out.as_deref(),
        material: &a.material,
        search: &a.search,
    })?;
    let result = run_study(&cfg.study)?;
    fs::create_dir_all(&cfg.out)?;
    write_csv(Some(&cfg.out.join("reports.csv")), &result.reports)?;
    let summary = FitsSummary {
        material: material_json(&cfg.study.material),
        mesh: cfg.study.mesh.label(),
        search: cfg.study.search,
        smax_grid: cfg.study.smax_grid,
        smax_tol: cfg.study.smax_tol,
        fits: &result.fits,
    };
    fs::write(cfg.out.join("fits.json"), serde_json::to_string_pretty(&summary)?)?;
    for f in &result.fits {
        out!(
            "{:<5} dt={:.6e}  disp: alpha={:.4} beta={:.3}  vec: {}",
            f.method,
            f.dt,
            f.disp.alpha,
            f.disp.beta,
            match f.vec {
                Some(v) => format!("alpha={:.4} beta={:.3}", v.alpha, v.beta),
                None => "zero".into(),
            }
        );
    }
    out!("wrote {}", cfg.out.display());
    Ok(())
}

fn table_study(methods: &[Method], elastic: bool, search: &SearchArgs) -> Result<StudyResult, CliError> {
    let material = MaterialArgs {
        material: Some(if elastic { "elastic" } else { "acoustic" }.into()),
        ..Default::default()
    }
    .resolve(&MaterialFile::default())?;
    let (opts, grid, tol) = search.resolve(&SearchFile::default())?;
    let mut cfg = StudyConfig::new(methods.to_vec(), material, tetdisp::mesh::MeshSpec::Regular);
    cfg.search = opts;
    cfg.smax_grid = grid;
    cfg.smax_tol = tol;
    Ok(run_study(&cfg)?)
}

fn cmd_tables(t: TablesArgs) -> Result<(), CliError> {
    let methods = if t.methods.is_empty() {
        Method::all()
    } else {
        parse_methods(&t.methods, None)?
    };
    let published = Published::load()?;
    let path = match &t.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            Some(dir.join(format!("table_{}.csv", t.which)))
        }
        None => None,
    };
    match t.which {
        2 | 5 | 6 => {
            let elastic = t.which != 2;
            let study = table_study(&methods, elastic, &t.search)?;
            let rows = fit_table(&study.fits, elastic, &published)?;
            write_csv(path.as_deref(), &rows)?;
            if path.is_some() {
                write_csv(None, &rows)?;
            }
        }
        _ => {
            let target = if t.which == 3 { 0.01 } else { 0.001 };
            let study = table_study(&methods, false, &t.search)?;
            let mesh = tetdisp::mesh::MeshSpec::Regular.build()?;
            let material = tetdisp::materials::MaterialModel::acoustic(1.0, 1.0)?;
            let (opts, _, _) = t.search.resolve(&SearchFile::default())?;
            let rows = study
                .fits
                .iter()
                .map(|f| cost_row(f, target, &mesh, &material, &opts, &published))
                .collect::<tetdisp::Result<Vec<_>>>()?;
            write_csv(path.as_deref(), &rows)?;
            if path.is_some() {
                write_csv(None, &rows)?;
            }
        }
    }
    Ok(())
}

fn single_method(name: &str) -> Result<Method, CliError> {
    let m = parse_methods(&[name.to_string()], None)?;
    if m.len() != 1 {
        return Err(CliError::Usage("expected a single method".into()));
    }
    Ok(m[0])
}

fn cmd_verify(v: VerifyArgs) -> Result<(), CliError> {
    let method = single_method(&v.method)?;
    let material = v.material.resolve(&MaterialFile::default())?;
    let mesh = parse_mesh(&v.mesh)?.build()?;
    if v.lattice == 0 {
        return Err(CliError::Usage("lattice size must be positive".into()));
    }
    if !(v.dt_factor > 0.0) {
        return Err(CliError::Usage("dt-factor must be positive".into()));
    }
    let ops = assemble(method, &mesh, &material)?;
    let op = SymbolOperator::new(&ops)?;
    let smax = spectral_radius_max(&op, v.smax_grid, tetdisp::dispersion::DEFAULT_SMAX_TOL)?;
    let k = method.degree();
    let stable = TimeScheme::new(k, smax.s_max)?;
    let scheme = TimeScheme::with_dt(k, smax.s_max, stable.dt * v.dt_factor)?;
    let (z, mode) = if v.extremal {
        let (z, mode, _) =
            extremal_real_mode(&op, &ops.transform, v.lattice).map_err(|e| CliError::Usage(e.to_string()))?;
        (z, mode)
    } else {
        if v.z.len() != 3 {
            return Err(CliError::Usage("--z takes three comma-separated indices".into()));
        }
        if v.z.iter().any(|&c| c >= v.lattice) {
            return Err(CliError::Usage("z entries must be below the lattice size".into()));
        }
        if v.mode >= op.n0() {
            return Err(CliError::Usage(format!("mode must be below {}", op.n0())));
        }
        ([v.z[0], v.z[1], v.z[2]], v.mode)
    };
    let report = verify_mode(&ops, &scheme, v.lattice, z, mode, v.steps)?;
    out!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_dump_mesh(m: MeshArgs) -> Result<(), CliError> {
    let mesh = parse_mesh(&m.mesh)?.build()?;
    out!("{}", serde_json::to_string_pretty(&mesh.to_dump())?);
    Ok(())
}

fn cmd_dump_operators(o: OperatorArgs) -> Result<(), CliError> {
    let method = single_method(&o.method)?;
    let material = o.material.resolve(&MaterialFile::default())?;
    let mesh = parse_mesh(&o.mesh)?.build()?;
    let ops = assemble(method, &mesh, &material)?;
    out!("{}", serde_json::to_string(&ops.to_dump())?);
    Ok(())
}

fn cmd_list_elements() -> Result<(), CliError> {
    let mesh = tetdisp::mesh::MeshSpec::Regular.build()?;
    let material = tetdisp::materials::MaterialModel::acoustic(1.0, 1.0)?;
    out!(
        "{:<6} {:>6} {:<12} {:>10} {:>8}",
        "method",
        "degree",
        "kind",
        "dofs/elem",
        "n0"
    );
    for m in Method::all() {
        let ops = assemble(m, &mesh, &material)?;
        let per_elem = match m {
            Method::MassLumped(r) => mass_lumped_rule(r)?.nodes.len(),
            Method::Dg { degree: p, .. } => (p + 1) * (p + 2) * (p + 3) / 6,
        };
        let kind = if m.is_dg() { "sipdg" } else { "mass-lumped" };
        out!(
            "{:<6} {:>6} {:<12} {:>10} {:>8}",
            m.to_string(),
            m.degree(),
            kind,
            per_elem,
            ops.n0
        );
    }
    for m in Method::all() {
        if let Method::MassLumped(name) = m {
            let rule = mass_lumped_rule(name)?;
            out!();
            out!(
                "# {name}: {} nodes, exact to degree {}; barycentric coordinates and weight (fraction of volume)",
                rule.nodes.len(),
                rule.exactness_degree
            );
            for (b, w) in rule.nodes.iter().zip(&rule.weights) {
                out!("{:.16e} {:.16e} {:.16e} {:.16e} {:.16e}", b[0], b[1], b[2], b[3], w);
            }
        }
    }
    Ok(())
}
