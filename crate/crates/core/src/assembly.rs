//! Cell mass block and lattice-shift stiffness blocks for the mass-lumped and
//! symmetric interior penalty DG discretizations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::Serialize;

use crate::elements::{
    dg_basis, mass_lumped_rule, nodal_basis_from_rule, ElementBasis, MassLumpedRule, RuleName, REF_VOLUME,
};
use crate::error::{Error, Result};
use crate::materials::MaterialModel;
use crate::mesh::{neighbor_shifts, shift_sub, FaceLink, LatticeTransform, Shift, UnitCellMesh, ZERO_SHIFT};
use crate::quadrature::{tet_rule, triangle_rule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PenaltyVariant {
    /// Per-element trace-inequality bound from a generalized eigenproblem.
    Eigenvalue,
    /// `p(p+2)/min d_e` with `d_e` the inscribed-sphere diameter.
    InscribedSphere,
}

impl PenaltyVariant {
    pub fn suffix(self) -> &'static str {
        match self {
            PenaltyVariant::Eigenvalue => "a",
            PenaltyVariant::InscribedSphere => "b",
        }
    }
}

impl FromStr for PenaltyVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" | "6a" | "eigen" | "eigenvalue" => Ok(PenaltyVariant::Eigenvalue),
            "b" | "6b" | "inscribed" | "inscribed-sphere" => Ok(PenaltyVariant::InscribedSphere),
            _ => Err(Error::InvalidParameter(format!("unknown penalty variant '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Method {
    MassLumped(RuleName),
    Dg { degree: usize, penalty: PenaltyVariant },
}

impl Method {
    /// The ten methods in table order.
    pub fn all() -> Vec<Method> {
        use PenaltyVariant::*;
        let dg = |degree, penalty| Method::Dg { degree, penalty };
        vec![
            dg(1, Eigenvalue),
            dg(1, InscribedSphere),
            Method::MassLumped(RuleName::ML1),
            dg(2, Eigenvalue),
            dg(2, InscribedSphere),
            Method::MassLumped(RuleName::ML2),
            dg(3, Eigenvalue),
            dg(3, InscribedSphere),
            Method::MassLumped(RuleName::ML3a),
            Method::MassLumped(RuleName::ML3b),
        ]
    }

    pub fn degree(&self) -> usize {
        match self {
            Method::MassLumped(r) => r.degree(),
            Method::Dg { degree, .. } => *degree,
        }
    }

    pub fn is_dg(&self) -> bool {
        matches!(self, Method::Dg { .. })
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::MassLumped(r) => write!(f, "{r}"),
            Method::Dg { degree, penalty } => write!(f, "DG{degree}{}", penalty.suffix()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        if lower.starts_with("ml") {
            return Ok(Method::MassLumped(t.parse()?));
        }
        if let Some(rest) = lower.strip_prefix("dg") {
            let mut chars = rest.chars();
            let degree = chars
                .next()
                .and_then(|c| c.to_digit(10))
                .map(|d| d as usize)
                .filter(|d| (1..=3).contains(d))
                .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))?;
            let penalty: String = chars.collect();
            let penalty = if penalty.is_empty() {
                PenaltyVariant::Eigenvalue
            } else {
                penalty.parse()?
            };
            return Ok(Method::Dg { degree, penalty });
        }
        Err(Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

/// Affine geometry of one tetrahedron, `x = v0 + J ξ`.
#[derive(Clone, Debug)]
pub struct TetGeometry {
    pub vertices: [Vector3<f64>; 4],
    pub jacobian: Matrix3<f64>,
    pub jacobian_inv: Matrix3<f64>,
    pub det: f64,
}

impl TetGeometry {
    pub fn new(vertices: [Vector3<f64>; 4]) -> Result<Self> {
        let jacobian = Matrix3::from_columns(&[
            vertices[1] - vertices[0],
            vertices[2] - vertices[0],
            vertices[3] - vertices[0],
        ]);
        let det = jacobian.determinant();
        let h = jacobian.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
        if !(det.abs() > 1e-12 * h * h * h) || !det.is_finite() {
            return Err(Error::DegenerateElement("singular element Jacobian".into()));
        }
        let jacobian_inv = jacobian
            .try_inverse()
            .ok_or_else(|| Error::DegenerateElement("singular element Jacobian".into()))?;
        Ok(Self {
            vertices,
            jacobian,
            jacobian_inv,
            det,
        })
    }

    pub fn volume(&self) -> f64 {
        self.det.abs() * REF_VOLUME
    }

    pub fn map(&self, xi: &Vector3<f64>) -> Vector3<f64> {
        self.vertices[0] + self.jacobian * xi
    }

    pub fn inverse_map(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.jacobian_inv * (x - self.vertices[0])
    }

    pub fn physical_gradient(&self, g: &Vector3<f64>) -> Vector3<f64> {
        self.jacobian_inv.transpose() * g
    }

    /// Vertices of the face opposite local vertex `f`.
    pub fn face_vertices(&self, f: usize) -> [Vector3<f64>; 3] {
        let mut out = [Vector3::zeros(); 3];
        let mut k = 0;
        for i in 0..4 {
            if i != f {
                out[k] = self.vertices[i];
                k += 1;
            }
        }
        out
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let p = self.face_vertices(f);
        0.5 * (p[1] - p[0]).cross(&(p[2] - p[0])).norm()
    }

    /// Outward unit normal of the face opposite local vertex `f`.
    pub fn face_normal(&self, f: usize) -> Vector3<f64> {
        let p = self.face_vertices(f);
        let n = (p[1] - p[0]).cross(&(p[2] - p[0])).normalize();
        if n.dot(&(self.vertices[f] - p[0])) > 0.0 {
            -n
        } else {
            n
        }
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                d = d.max((self.vertices[i] - self.vertices[j]).norm());
            }
        }
        d
    }
}

/// Diameter of the inscribed sphere, `6V / Σ face areas`.
pub fn inscribed_diameter(vertices: &[Vector3<f64>; 4]) -> Result<f64> {
    let g = TetGeometry::new(*vertices)?;
    let area: f64 = (0..4).map(|f| g.face_area(f)).sum();
    Ok(6.0 * g.volume() / area)
}

/// Per-face penalty data. `alpha[t][f]` is the value on `∂e ∩ f` seen from
/// tetrahedron `t`, `average[t][f]` the face average `⟨α⟩`.
#[derive(Clone, Debug, Serialize)]
pub struct PenaltySpec {
    pub variant: PenaltyVariant,
    pub alpha: Vec<[f64; 4]>,
    pub average: Vec<[f64; 4]>,
    /// `|f|/|e|`.
    pub nu: Vec<[f64; 4]>,
    pub inscribed_diameters: Vec<f64>,
    /// Largest trace/energy ratio per element (eigenvalue variant only).
    pub trace_constants: Vec<f64>,
}

fn element_geometries(mesh: &UnitCellMesh) -> Result<Vec<TetGeometry>> {
    (0..mesh.num_tets())
        .map(|t| TetGeometry::new(mesh.tet_vertices(t)))
        .collect()
}

fn fill_averages(mesh: &UnitCellMesh, alpha: &[[f64; 4]]) -> Result<Vec<[f64; 4]>> {
    let table = mesh.enumerate_couplings()?;
    let mut avg = vec![[0.0; 4]; alpha.len()];
    for l in &table.faces {
        avg[l.tet][l.face] = 0.5 * (alpha[l.tet][l.face] + alpha[l.neighbor][l.neighbor_face]);
    }
    Ok(avg)
}

pub fn penalty_inscribed(mesh: &UnitCellMesh, p: usize) -> Result<PenaltySpec> {
    if p < 1 {
        return Err(Error::InvalidParameter("penalty degree must be at least 1".into()));
    }
    let geoms = element_geometries(mesh)?;
    let d: Vec<f64> = geoms
        .iter()
        .map(|g| inscribed_diameter(&g.vertices))
        .collect::<Result<_>>()?;
    let table = mesh.enumerate_couplings()?;
    let num = (p * (p + 2)) as f64;
    let mut alpha = vec![[0.0; 4]; geoms.len()];
    for l in &table.faces {
        alpha[l.tet][l.face] = num / d[l.tet].min(d[l.neighbor]);
    }
    let nu = geoms
        .iter()
        .map(|g| std::array::from_fn(|f| g.face_area(f) / g.volume()))
        .collect();
    let average = fill_averages(mesh, &alpha)?;
    Ok(PenaltySpec {
        variant: PenaltyVariant::InscribedSphere,
        alpha,
        average,
        nu,
        inscribed_diameters: d,
        trace_constants: vec![],
    })
}

/// Symmetric pseudo-inverse with relative eigenvalue cutoff.
fn pseudo_inverse(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..n {
        let l = eig.eigenvalues[k];
        if l.abs() > rel_tol * max {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / l;
        }
    }
    out
}

/// Per-quadrature-point matrices of one element: `Φ` (`m × nb·m`, values)
/// and `B` (`3m × nb·m`, flattened gradients).
struct PointOperators {
    values: DMatrix<f64>,
    grads: DMatrix<f64>,
}

fn point_operators(basis: &ElementBasis, geom: &TetGeometry, xi: &Vector3<f64>, m: usize) -> PointOperators {
    let nb = basis.dim();
    let vals = basis.values(xi);
    let grads: Vec<Vector3<f64>> = basis.gradients(xi).iter().map(|g| geom.physical_gradient(g)).collect();
    let mut values = DMatrix::zeros(m, nb * m);
    let mut gmat = DMatrix::zeros(3 * m, nb * m);
    for a in 0..nb {
        for i in 0..m {
            let col = a * m + i;
            values[(i, col)] = vals[a];
            for k in 0..3 {
                gmat[(k * m + i, col)] = grads[a][k];
            }
        }
    }
    PointOperators { values, grads: gmat }
}

/// `P_n` with `(P_n σ)_j = Σ_k n_k σ_{kj}`.
fn traction_projector(n: &Vector3<f64>, m: usize) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(m, 3 * m);
    for j in 0..m {
        for k in 0..3 {
            p[(j, k * m + j)] = n[k];
        }
    }
    p
}

fn basis_poly_degree(basis: &ElementBasis) -> usize {
    basis.functions.degree()
}

/// Element stiffness `∫_e ∇u : C : ∇w`.
pub fn element_stiffness(basis: &ElementBasis, geom: &TetGeometry, material: &MaterialModel) -> Result<DMatrix<f64>> {
    let m = material.m();
    let deg = 2 * basis_poly_degree(basis).saturating_sub(1);
    let q = tet_rule(deg)?;
    let e = material.energy_matrix();
    let n = basis.dim() * m;
    let mut k = DMatrix::zeros(n, n);
    for (xi, w) in q.points.iter().zip(&q.weights) {
        let ops = point_operators(basis, geom, xi, m);
        let eg = e * &ops.grads;
        k += ops.grads.transpose() * eg * (w * geom.det.abs());
    }
    Ok((&k + k.transpose()) * 0.5)
}

/// Element mass block `∫_e ρ u · w` with exact integration.
pub fn element_mass(basis: &ElementBasis, geom: &TetGeometry, rho: f64, m: usize) -> DMatrix<f64> {
    let gram = basis.gram();
    let nb = basis.dim();
    let scale = rho * geom.det.abs();
    DMatrix::from_fn(nb * m, nb * m, |r, c| {
        if r % m == c % m {
            scale * gram[(r / m, c / m)]
        } else {
            0.0
        }
    })
}

pub fn penalty_eigenvalue(mesh: &UnitCellMesh, p: usize, material: &MaterialModel) -> Result<PenaltySpec> {
    let basis = dg_basis(p)?;
    penalty_eigenvalue_with_basis(mesh, &basis, material)
}

/// Largest ratio of the weighted boundary traction form to the energy form on
/// `P^p(e)^m`, modulo the energy kernel.
pub fn trace_constant(basis: &ElementBasis, geom: &TetGeometry, material: &MaterialModel) -> Result<f64> {
    let m = material.m();
    let n = basis.dim() * m;
    let energy = element_stiffness(basis, geom, material)?;
    let tri = triangle_rule(2 * basis_poly_degree(basis))?;
    let e = material.energy_matrix();
    let mut bform = DMatrix::zeros(n, n);
    for f in 0..4 {
        let normal = geom.face_normal(f);
        let area = geom.face_area(f);
        let pv = geom.face_vertices(f);
        let weight_scale = geom.volume() / area * 2.0 * area;
        let cn_inv = pseudo_inverse(&material.normal_tensor(&normal), 1e-12);
        let proj = traction_projector(&normal, m) * e;
        for (uv, w) in tri.points.iter().zip(&tri.weights) {
            let x = pv[0] + (pv[1] - pv[0]) * uv[0] + (pv[2] - pv[0]) * uv[1];
            let ops = point_operators(basis, geom, &geom.inverse_map(&x), m);
            let t = &proj * &ops.grads;
            bform += t.transpose() * &cn_inv * t * (w * weight_scale);
        }
    }
    let eig = energy.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::InvalidParameter(
            "energy form vanishes on the element space".into(),
        ));
    }
    let keep: Vec<usize> = (0..n).filter(|k| eig.eigenvalues[*k] > 1e-12 * max).collect();
    let z = DMatrix::from_fn(n, keep.len(), |r, c| {
        let k = keep[c];
        eig.eigenvectors[(r, k)] / eig.eigenvalues[k].sqrt()
    });
    let reduced = z.transpose() * bform * &z;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    Ok(reduced.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max))
}

pub fn penalty_eigenvalue_with_basis(
    mesh: &UnitCellMesh,
    basis: &ElementBasis,
    material: &MaterialModel,
) -> Result<PenaltySpec> {
    let geoms = element_geometries(mesh)?;
    let sup: Vec<f64> = geoms
        .iter()
        .map(|g| trace_constant(basis, g, material))
        .collect::<Result<_>>()?;
    let nu: Vec<[f64; 4]> = geoms
        .iter()
        .map(|g| std::array::from_fn(|f| g.face_area(f) / g.volume()))
        .collect();
    // |T_f| = 2 for every face of a periodic mesh.
    let alpha: Vec<[f64; 4]> = (0..geoms.len())
        .map(|t| std::array::from_fn(|f| nu[t][f] / 2.0 * sup[t]))
        .collect();
    let d = geoms
        .iter()
        .map(|g| inscribed_diameter(&g.vertices))
        .collect::<Result<_>>()?;
    let average = fill_averages(mesh, &alpha)?;
    Ok(PenaltySpec {
        variant: PenaltyVariant::Eigenvalue,
        alpha,
        average,
        nu,
        inscribed_diameters: d,
        trace_constants: sup,
    })
}

/// Cell mass matrix, diagonal or dense.
#[derive(Clone, Debug)]
pub enum MassMatrix {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl MassMatrix {
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            MassMatrix::Diagonal(d) => DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.clone())),
            MassMatrix::Dense(m) => m.clone(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, MassMatrix::Diagonal(_))
    }

    pub fn dim(&self) -> usize {
        match self {
            MassMatrix::Diagonal(d) => d.len(),
            MassMatrix::Dense(m) => m.nrows(),
        }
    }
}

/// Data needed to project continuum fields onto the cell's degrees of freedom.
#[derive(Clone, Debug)]
pub enum DofLayout {
    /// Nodal dofs at the given physical positions (node-major, `m` per node).
    Nodal { positions: Vec<Vector3<f64>> },
    /// Element-local modal dofs (element-major, then basis function, then component).
    Modal {
        elements: Vec<TetGeometry>,
        basis: ElementBasis,
    },
}

/// `M^(Ω0)` and the coupling blocks `A^(Ω0, Ω_Δk)`.
#[derive(Clone, Debug)]
pub struct LocalOperatorSet {
    pub method: Method,
    pub m: usize,
    pub n0: usize,
    pub mass: MassMatrix,
    pub blocks: BTreeMap<Shift, DMatrix<f64>>,
    pub layout: DofLayout,
    /// `Σ_q Σ_{q'∈N(q)} |U_q||U_q'|` (ML) or `Σ_e Σ_{e'∈N(e)} |U_e||U_e'|` (DG) per cell.
    pub coupling_entries: usize,
    pub penalty: Option<PenaltySpec>,
    pub transform: LatticeTransform,
    pub num_elements: usize,
    pub cell_volume: f64,
    /// Largest element edge length.
    pub max_diameter: f64,
}

impl LocalOperatorSet {
    pub fn block(&self, s: Shift) -> Option<&DMatrix<f64>> {
        self.blocks.get(&s)
    }

    /// Largest absolute stiffness entry, used to scale tolerances.
    pub fn scale(&self) -> f64 {
        self.blocks.values().map(|b| b.amax()).fold(0.0, f64::max)
    }

    /// `Σ_Δk A_Δk`, the symbol at `κ = 0`.
    pub fn block_sum(&self) -> DMatrix<f64> {
        self.blocks
            .values()
            .fold(DMatrix::zeros(self.n0, self.n0), |acc, b| acc + b)
    }

    pub fn to_dump(&self) -> OperatorDump {
        let mass = self.mass.to_dense();
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
                .collect()
        };
        OperatorDump {
            method: self.method.to_string(),
            m: self.m,
            n0: self.n0,
            mass: rows(&mass),
            blocks: self
                .blocks
                .iter()
                .map(|(s, b)| BlockDump {
                    shift: *s,
                    matrix: rows(b),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockDump {
    pub shift: Shift,
    pub matrix: Vec<Vec<f64>>,
}

/// JSON form of an operator set, as written by `dump-operators`.
#[derive(Clone, Debug, Serialize)]
pub struct OperatorDump {
    pub method: String,
    pub m: usize,
    pub n0: usize,
    pub mass: Vec<Vec<f64>>,
    pub blocks: Vec<BlockDump>,
}

fn empty_blocks(n0: usize) -> BTreeMap<Shift, DMatrix<f64>> {
    neighbor_shifts()
        .into_iter()
        .map(|s| (s, DMatrix::zeros(n0, n0)))
        .collect()
}

fn prune_blocks(blocks: &mut BTreeMap<Shift, DMatrix<f64>>) {
    blocks.retain(|s, b| *s == ZERO_SHIFT || b.amax() > 0.0);
}

const SNAP: f64 = 1e-9;

pub fn assemble(method: Method, mesh: &UnitCellMesh, material: &MaterialModel) -> Result<LocalOperatorSet> {
    match method {
        Method::MassLumped(rule) => assemble_mass_lumped(mesh, &mass_lumped_rule(rule)?, material),
        Method::Dg { degree, penalty } => assemble_dg(mesh, degree, material, penalty),
    }
}

pub fn assemble_mass_lumped(
    mesh: &UnitCellMesh,
    rule: &MassLumpedRule,
    material: &MaterialModel,
) -> Result<LocalOperatorSet> {
    let basis = nodal_basis_from_rule(rule)?;
    let m = material.m();
    let geoms = element_geometries(mesh)?;
    // Owned node representatives in lattice coordinates and, per element,
    // (node id, shift) for every local node.
    let mut reps: Vec<Vector3<f64>> = Vec::new();
    let mut local: Vec<Vec<(usize, Shift)>> = Vec::with_capacity(mesh.num_tets());
    for tet in mesh.tets() {
        let corners: Vec<Vector3<f64>> = tet.iter().map(|r| mesh.lattice_position(r)).collect();
        let mut nodes = Vec::with_capacity(rule.nodes.len());
        for b in &rule.nodes {
            let r: Vector3<f64> = (0..4).map(|i| corners[i] * b[i]).sum();
            let s: Shift = std::array::from_fn(|k| (r[k] + SNAP).floor() as i32);
            let rep = r - Vector3::new(s[0] as f64, s[1] as f64, s[2] as f64);
            let id = match reps.iter().position(|q| (q - rep).amax() < 1e-8) {
                Some(id) => id,
                None => {
                    reps.push(rep);
                    reps.len() - 1
                }
            };
            nodes.push((id, s));
        }
        local.push(nodes);
    }
    let n_nodes = reps.len();
    let n0 = n_nodes * m;
    let mut mass = vec![0.0; n0];
    let mut blocks = empty_blocks(n0);
    let mut pairs: BTreeSet<(usize, usize, Shift)> = BTreeSet::new();
    for (t, geom) in geoms.iter().enumerate() {
        let k = element_stiffness(&basis, geom, material)?;
        let nodes = &local[t];
        for (a, (na, sa)) in nodes.iter().enumerate() {
            for i in 0..m {
                mass[na * m + i] += rule.weights[a] * geom.volume() * material.rho();
            }
            for (b, (nb, sb)) in nodes.iter().enumerate() {
                let ds = shift_sub(*sb, *sa);
                pairs.insert((*na, *nb, ds));
                let blk = blocks
                    .get_mut(&ds)
                    .ok_or_else(|| Error::Topology(format!("node coupling across shift {ds:?}")))?;
                for i in 0..m {
                    for l in 0..m {
                        blk[(na * m + i, nb * m + l)] += k[(a * m + i, b * m + l)];
                    }
                }
            }
        }
    }
    prune_blocks(&mut blocks);
    let positions = reps.iter().map(|r| mesh.transform().apply(r)).collect();
    Ok(LocalOperatorSet {
        method: Method::MassLumped(rule.name),
        m,
        n0,
        mass: MassMatrix::Diagonal(mass),
        blocks,
        layout: DofLayout::Nodal { positions },
        coupling_entries: pairs.len() * m * m,
        penalty: None,
        transform: mesh.transform().clone(),
        num_elements: geoms.len(),
        cell_volume: mesh.cell_volume(),
        max_diameter: geoms.iter().map(|g| g.diameter()).fold(0.0, f64::max),
    })
}

pub fn assemble_dg(
    mesh: &UnitCellMesh,
    p: usize,
    material: &MaterialModel,
    variant: PenaltyVariant,
) -> Result<LocalOperatorSet> {
    let basis = dg_basis(p)?;
    let penalty = match variant {
        PenaltyVariant::Eigenvalue => penalty_eigenvalue_with_basis(mesh, &basis, material)?,
        PenaltyVariant::InscribedSphere => penalty_inscribed(mesh, p)?,
    };
    assemble_dg_with_basis(mesh, &basis, material, penalty)
}

pub fn assemble_dg_with_basis(
    mesh: &UnitCellMesh,
    basis: &ElementBasis,
    material: &MaterialModel,
    penalty: PenaltySpec,
) -> Result<LocalOperatorSet> {
    let m = material.m();
    let nb = basis.dim();
    let ne = nb * m;
    let geoms = element_geometries(mesh)?;
    let n0 = geoms.len() * ne;
    let table = mesh.enumerate_couplings()?;
    let mut blocks = empty_blocks(n0);

    let gram = basis.gram();
    let orthonormal = (&gram / REF_VOLUME - DMatrix::<f64>::identity(nb, nb)).amax() < 1e-12;
    let mut mass_dense = DMatrix::zeros(n0, n0);
    for (t, geom) in geoms.iter().enumerate() {
        let off = t * ne;
        let k = element_stiffness(basis, geom, material)?;
        let mut v = blocks
            .get_mut(&ZERO_SHIFT)
            .expect("zero shift block")
            .view_mut((off, off), (ne, ne));
        v += &k;
        let mm = element_mass(basis, geom, material.rho(), m);
        mass_dense.view_mut((off, off), (ne, ne)).copy_from(&mm);
    }

    let tri = triangle_rule(2 * basis_poly_degree(basis))?;
    let e = material.energy_matrix();
    for link in &table.faces {
        add_face_terms(link, &geoms, basis, material, e, &tri, &penalty, ne, &mut blocks)?;
    }
    prune_blocks(&mut blocks);
    symmetrize_blocks(&mut blocks);

    let mass = if orthonormal {
        MassMatrix::Diagonal((0..n0).map(|i| mass_dense[(i, i)]).collect())
    } else {
        MassMatrix::Dense(mass_dense)
    };
    Ok(LocalOperatorSet {
        method: Method::Dg {
            degree: basis.degree,
            penalty: penalty.variant,
        },
        m,
        n0,
        mass,
        blocks,
        layout: DofLayout::Modal {
            elements: geoms.clone(),
            basis: basis.clone(),
        },
        coupling_entries: geoms.len() * 5 * ne * ne,
        penalty: Some(penalty),
        transform: mesh.transform().clone(),
        num_elements: geoms.len(),
        cell_volume: mesh.cell_volume(),
        max_diameter: geoms.iter().map(|g| g.diameter()).fold(0.0, f64::max),
    })
}

/// Replaces `A_Δk` by `(A_Δk + A_{-Δk}ᵀ)/2`.
fn symmetrize_blocks(blocks: &mut BTreeMap<Shift, DMatrix<f64>>) {
    let keys: Vec<Shift> = blocks.keys().cloned().collect();
    let mut out = BTreeMap::new();
    for s in keys {
        let neg = [-s[0], -s[1], -s[2]];
        let a = &blocks[&s];
        let sym = match blocks.get(&neg) {
            Some(b) => (a + b.transpose()) * 0.5,
            None => a.clone(),
        };
        out.insert(s, sym);
    }
    *blocks = out;
}

#[allow(clippy::too_many_arguments)]
fn add_face_terms(
    link: &FaceLink,
    geoms: &[TetGeometry],
    basis: &ElementBasis,
    material: &MaterialModel,
    energy: &DMatrix<f64>,
    tri: &crate::quadrature::TriangleQuadrature,
    penalty: &PenaltySpec,
    ne: usize,
    blocks: &mut BTreeMap<Shift, DMatrix<f64>>,
) -> Result<()> {
    let m = material.m();
    let g1 = &geoms[link.tet];
    let g2 = &geoms[link.neighbor];
    let normal = g1.face_normal(link.face);
    let area = g1.face_area(link.face);
    let pv = g1.face_vertices(link.face);
    let cn = material.normal_tensor(&normal);
    let proj = traction_projector(&normal, m) * energy;
    let alpha = penalty.average[link.tet][link.face];
    // Neighbor lives in cell Ω_shift; its Ω0-frame coordinates are x - T·shift.
    let offset = face_offset(g2, link, &pv)?;
    let mut f11 = DMatrix::zeros(ne, ne);
    let mut f12 = DMatrix::zeros(ne, ne);
    for (uv, w) in tri.points.iter().zip(&tri.weights) {
        let x = pv[0] + (pv[1] - pv[0]) * uv[0] + (pv[2] - pv[0]) * uv[1];
        let weight = w * 2.0 * area;
        let o1 = point_operators(basis, g1, &g1.inverse_map(&x), m);
        let o2 = point_operators(basis, g2, &g2.inverse_map(&(x - offset)), m);
        let t1 = &proj * &o1.grads;
        let t2 = &proj * &o2.grads;
        let v1t = o1.values.transpose();
        let t1t = t1.transpose();
        f11 += (&v1t * &t1 * -0.5 - &t1t * &o1.values * 0.5 + &v1t * &cn * &o1.values * alpha) * weight;
        f12 += (&v1t * &t2 * -0.5 + &t1t * &o2.values * 0.5 - &v1t * &cn * &o2.values * alpha) * weight;
    }
    let r = link.tet * ne;
    let c = link.neighbor * ne;
    let mut v = blocks
        .get_mut(&ZERO_SHIFT)
        .expect("zero shift block")
        .view_mut((r, r), (ne, ne));
    v += &f11;
    let mut v = blocks
        .get_mut(&link.shift)
        .ok_or_else(|| Error::Topology(format!("face coupling across shift {:?}", link.shift)))?
        .view_mut((r, c), (ne, ne));
    v += &f12;
    Ok(())
}

/// Physical translation between the two sides of a periodic face, checked
/// against the face vertices.
fn face_offset(g2: &TetGeometry, link: &FaceLink, pv: &[Vector3<f64>; 3]) -> Result<Vector3<f64>> {
    // Centroid difference of the matched faces.
    let c1: Vector3<f64> = pv.iter().sum::<Vector3<f64>>() / 3.0;
    let q = g2.face_vertices(link.neighbor_face);
    let c2: Vector3<f64> = q.iter().sum::<Vector3<f64>>() / 3.0;
    let off = c1 - c2;
    for p in pv {
        if !q.iter().any(|v| (v + off - p).norm() < 1e-9 * (1.0 + p.norm())) {
            return Err(Error::Topology("periodic faces do not match".into()));
        }
    }
    Ok(off)
}
