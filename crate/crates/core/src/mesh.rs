//! Periodic unit-cell tetrahedral meshes.
//!
//! A cell is described in lattice ("pre-transform") coordinates, where the
//! repeating cell is `[0,1)^3`, and mapped to physical space by a
//! [`LatticeTransform`]. Tetrahedra reference the cell's representative
//! vertices together with an integer lattice shift, so periodic
//! identification is exact integer bookkeeping.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};

/// Integer lattice shift `Δk`.
pub type Shift = [i32; 3];

pub const ZERO_SHIFT: Shift = [0, 0, 0];

/// All 27 shifts in `{-1,0,1}^3`, in lexicographic order.
pub fn neighbor_shifts() -> Vec<Shift> {
    let mut out = Vec::with_capacity(27);
    for i in -1..=1 {
        for j in -1..=1 {
            for k in -1..=1 {
                out.push([i, j, k]);
            }
        }
    }
    out
}

pub fn shift_add(a: Shift, b: Shift) -> Shift {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn shift_sub(a: Shift, b: Shift) -> Shift {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn shift_neg(a: Shift) -> Shift {
    [-a[0], -a[1], -a[2]]
}

pub fn shift_vec(s: Shift) -> Vector3<f64> {
    Vector3::new(s[0] as f64, s[1] as f64, s[2] as f64)
}

/// Linear map `x -> T x` from lattice coordinates to physical space.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeTransform {
    t: Matrix3<f64>,
    tinv_t: Matrix3<f64>,
}

impl LatticeTransform {
    pub fn new(t: Matrix3<f64>) -> Result<Self> {
        let det = t.determinant();
        if !(det > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lattice transform must have positive determinant, got {det}"
            )));
        }
        let inv = t
            .try_inverse()
            .ok_or_else(|| Error::InvalidParameter("singular lattice transform".into()))?;
        Ok(Self {
            t,
            tinv_t: inv.transpose(),
        })
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity()).expect("identity is invertible")
    }

    /// The map that turns the sliced unit cube into the tetragonal disphenoid honeycomb.
    pub fn disphenoid() -> Self {
        let t = Matrix3::new(
            1.0,
            -1.0 / 3.0,
            -1.0 / 3.0,
            0.0,
            (8.0f64 / 9.0).sqrt(),
            -(2.0f64 / 9.0).sqrt(),
            0.0,
            0.0,
            (2.0f64 / 3.0).sqrt(),
        );
        Self::new(t).expect("disphenoid transform is invertible")
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.t
    }

    /// `T^{-t}`, which maps lattice wave numbers `ζ` to wave vectors `κ`.
    pub fn inverse_transpose(&self) -> &Matrix3<f64> {
        &self.tinv_t
    }

    pub fn det(&self) -> f64 {
        self.t.determinant()
    }

    pub fn apply(&self, r: &Vector3<f64>) -> Vector3<f64> {
        self.t * r
    }

    /// Physical offset `x_Δk = T Δk` of a neighboring cell.
    pub fn lattice_vector(&self, s: Shift) -> Vector3<f64> {
        self.t * shift_vec(s)
    }

    pub fn wave_vector(&self, zeta: &Vector3<f64>) -> Vector3<f64> {
        self.tinv_t * zeta
    }

    /// Lattice wave numbers `ζ = T^t κ`.
    pub fn lattice_wavenumbers(&self, kappa: &Vector3<f64>) -> Vector3<f64> {
        self.t.transpose() * kappa
    }

    /// Prepends a scaling of the third physical coordinate.
    pub fn scaled_z(&self, tz: f64) -> Result<Self> {
        let s = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, tz));
        Self::new(s * self.t)
    }
}

/// A tetrahedron vertex: representative vertex index plus lattice shift.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct VertexRef {
    pub vertex: usize,
    pub shift: Shift,
}

/// Parameters of the distorted 48-tetrahedron cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistortionParams {
    pub delta: f64,
    pub tz: f64,
}

impl DistortionParams {
    pub fn new(delta: f64, tz: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidParameter(format!(
                "distortion must lie in [0, 1), got {delta}"
            )));
        }
        if !(tz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "z-scale factor must be positive, got {tz}"
            )));
        }
        Ok(Self { delta, tz })
    }
}

/// One repeating cell of a periodic tetrahedral mesh.
#[derive(Clone, Debug)]
pub struct UnitCellMesh {
    vertices: Vec<Vector3<f64>>,
    tets: Vec<[VertexRef; 4]>,
    transform: LatticeTransform,
    cell_volume: f64,
    avg_elem_volume: f64,
}

impl UnitCellMesh {
    /// Builds a cell from lattice-coordinate vertices and tetrahedra.
    /// Orientation is normalized so every tetrahedron has positive volume.
    pub fn new(vertices: Vec<Vector3<f64>>, tets: Vec<[VertexRef; 4]>, transform: LatticeTransform) -> Result<Self> {
        let mut mesh = Self {
            vertices,
            tets,
            transform,
            cell_volume: 0.0,
            avg_elem_volume: 0.0,
        };
        for t in 0..mesh.tets.len() {
            for r in &mesh.tets[t] {
                if r.vertex >= mesh.vertices.len() {
                    return Err(Error::Topology(format!(
                        "tetrahedron {t} references missing vertex {}",
                        r.vertex
                    )));
                }
            }
            let v = mesh.signed_volume(t);
            if v == 0.0 || !v.is_finite() {
                return Err(Error::DegenerateElement(format!("tetrahedron {t} has zero volume")));
            }
            if v < 0.0 {
                mesh.tets[t].swap(2, 3);
            }
        }
        mesh.cell_volume = mesh.transform.det();
        let total: f64 = (0..mesh.tets.len()).map(|t| mesh.tet_volume(t)).sum();
        let rel = (total - mesh.cell_volume).abs() / mesh.cell_volume;
        if rel > 1e-12 {
            return Err(Error::Topology(format!(
                "tetrahedra volumes sum to {total}, cell volume is {}",
                mesh.cell_volume
            )));
        }
        mesh.avg_elem_volume = mesh.cell_volume / mesh.tets.len() as f64;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn tets(&self) -> &[[VertexRef; 4]] {
        &self.tets
    }

    pub fn num_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn transform(&self) -> &LatticeTransform {
        &self.transform
    }

    /// `|Ω0|`.
    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// `|e|_av`.
    pub fn avg_elem_volume(&self) -> f64 {
        self.avg_elem_volume
    }

    /// Lattice coordinates of a (shifted) vertex.
    pub fn lattice_position(&self, r: &VertexRef) -> Vector3<f64> {
        self.vertices[r.vertex] + shift_vec(r.shift)
    }

    pub fn physical_position(&self, r: &VertexRef) -> Vector3<f64> {
        self.transform.apply(&self.lattice_position(r))
    }

    /// Physical vertex coordinates of tetrahedron `t`, in the frame of cell Ω0.
    pub fn tet_vertices(&self, t: usize) -> [Vector3<f64>; 4] {
        let tet = &self.tets[t];
        [
            self.physical_position(&tet[0]),
            self.physical_position(&tet[1]),
            self.physical_position(&tet[2]),
            self.physical_position(&tet[3]),
        ]
    }

    fn signed_volume(&self, t: usize) -> f64 {
        let v = self.tet_vertices(t);
        (v[1] - v[0]).cross(&(v[2] - v[0])).dot(&(v[3] - v[0])) / 6.0
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        self.signed_volume(t).abs()
    }

    /// Vertex references of local face `f` (the face opposite local vertex `f`).
    pub fn face_refs(&self, t: usize, f: usize) -> [VertexRef; 3] {
        let tet = &self.tets[t];
        let mut out = [tet[0]; 3];
        let mut k = 0;
        for (i, r) in tet.iter().enumerate() {
            if i != f {
                out[k] = *r;
                k += 1;
            }
        }
        out
    }

    /// Returns a copy with the physical z-coordinate scaled by `tz`.
    pub fn apply_z_scaling(&self, tz: f64) -> Result<Self> {
        if !(tz > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "z-scale factor must be positive, got {tz}"
            )));
        }
        let transform = self.transform.scaled_z(tz)?;
        Self::new(self.vertices.clone(), self.tets.clone(), transform)
    }

    /// Face adjacency and vertex coupling tables under periodic identification.
    pub fn enumerate_couplings(&self) -> Result<CouplingTable> {
        let mut by_key: HashMap<Vec<(usize, Shift)>, Vec<(usize, usize, Shift)>> = HashMap::new();
        for t in 0..self.tets.len() {
            for f in 0..4 {
                let refs = self.face_refs(t, f);
                let base = refs.iter().map(|r| r.shift).min().expect("three vertices");
                let mut key: Vec<(usize, Shift)> = refs.iter().map(|r| (r.vertex, shift_sub(r.shift, base))).collect();
                key.sort();
                by_key.entry(key).or_default().push((t, f, base));
            }
        }
        let mut faces = Vec::with_capacity(4 * self.tets.len());
        for (key, sides) in &by_key {
            if sides.len() != 2 {
                return Err(Error::Topology(format!(
                    "periodic face {key:?} is shared by {} tetrahedra",
                    sides.len()
                )));
            }
            for (a, b) in [(0, 1), (1, 0)] {
                let (t, f, base) = sides[a];
                let (tn, fnb, base_n) = sides[b];
                faces.push(FaceLink {
                    tet: t,
                    face: f,
                    neighbor: tn,
                    neighbor_face: fnb,
                    shift: shift_sub(base, base_n),
                });
            }
        }
        faces.sort_by_key(|l| (l.tet, l.face));

        let mut vertex_pairs: BTreeMap<Shift, BTreeSet<(usize, usize)>> = BTreeMap::new();
        for tet in &self.tets {
            for a in tet {
                for b in tet {
                    vertex_pairs
                        .entry(shift_sub(b.shift, a.shift))
                        .or_default()
                        .insert((a.vertex, b.vertex));
                }
            }
        }
        Ok(CouplingTable { faces, vertex_pairs })
    }

    pub fn to_dump(&self) -> MeshDump {
        let t = self.transform.matrix();
        MeshDump {
            vertices: self
                .vertices
                .iter()
                .map(|v| {
                    let x = self.transform.apply(v);
                    [x[0], x[1], x[2]]
                })
                .collect(),
            lattice_vertices: self.vertices.iter().map(|v| [v[0], v[1], v[2]]).collect(),
            tets: self
                .tets
                .iter()
                .map(|tet| TetDump {
                    vertices: [tet[0].vertex, tet[1].vertex, tet[2].vertex, tet[3].vertex],
                    shifts: [tet[0].shift, tet[1].shift, tet[2].shift, tet[3].shift],
                })
                .collect(),
            transform: [
                [t[(0, 0)], t[(0, 1)], t[(0, 2)]],
                [t[(1, 0)], t[(1, 1)], t[(1, 2)]],
                [t[(2, 0)], t[(2, 1)], t[(2, 2)]],
            ],
            cell_volume: self.cell_volume,
            avg_elem_volume: self.avg_elem_volume,
        }
    }
}

/// Adjacency across one face, seen from `tet` in cell Ω0; the neighbor lives
/// in cell `Ω_shift`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FaceLink {
    pub tet: usize,
    pub face: usize,
    pub neighbor: usize,
    pub neighbor_face: usize,
    pub shift: Shift,
}

#[derive(Clone, Debug)]
pub struct CouplingTable {
    /// One entry per (tetrahedron, local face) of the cell.
    pub faces: Vec<FaceLink>,
    /// Vertex pairs `(i, j)` such that vertex `i` of Ω0 and vertex `j` of
    /// `Ω_Δk` share a tetrahedron, keyed by `Δk`.
    pub vertex_pairs: BTreeMap<Shift, BTreeSet<(usize, usize)>>,
}

impl CouplingTable {
    pub fn face_neighbors(&self, tet: usize) -> impl Iterator<Item = &FaceLink> {
        self.faces.iter().filter(move |l| l.tet == tet)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TetDump {
    pub vertices: [usize; 4],
    pub shifts: [Shift; 4],
}

/// JSON form of a cell, as written by `dump-mesh`.
#[derive(Clone, Debug, Serialize)]
pub struct MeshDump {
    pub vertices: Vec<[f64; 3]>,
    pub lattice_vertices: Vec<[f64; 3]>,
    pub tets: Vec<TetDump>,
    pub transform: [[f64; 3]; 3],
    pub cell_volume: f64,
    pub avg_elem_volume: f64,
}

const AXES: [Shift; 3] = [[1, 0, 0], [0, 1, 0], [0, 0, 1]];

/// The six tetrahedra of a cube sliced by the planes x=y, x=z and y=z, as
/// corner paths `o -> o+e_a -> o+e_a+e_b -> o+(1,1,1)` in integer coordinates.
fn sliced_cube_paths(origin: Shift) -> Vec<[Shift; 4]> {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    perms
        .iter()
        .map(|p| {
            let a = shift_add(origin, AXES[p[0]]);
            let b = shift_add(a, AXES[p[1]]);
            let c = shift_add(b, AXES[p[2]]);
            [origin, a, b, c]
        })
        .collect()
}

fn sliced_unit_cube(transform: LatticeTransform) -> Result<UnitCellMesh> {
    let tets = sliced_cube_paths(ZERO_SHIFT)
        .into_iter()
        .map(|path| path.map(|s| VertexRef { vertex: 0, shift: s }))
        .collect();
    UnitCellMesh::new(vec![Vector3::zeros()], tets, transform)
}

/// Six-tetrahedron cell of the tetragonal disphenoid honeycomb.
pub fn build_disphenoid_cell() -> UnitCellMesh {
    sliced_unit_cube(LatticeTransform::disphenoid()).expect("disphenoid cell is valid")
}

/// The sliced unit cube without the disphenoid map (`T = I`).
pub fn build_cube_cell() -> UnitCellMesh {
    sliced_unit_cube(LatticeTransform::identity()).expect("cube cell is valid")
}

/// 48-tetrahedron cell: 2x2x2 sliced half-cubes with the central node moved
/// to `0.5(1+δ)(1,1,1)`, followed by the disphenoid map and z-scaling.
pub fn build_distorted_cell(params: DistortionParams) -> Result<UnitCellMesh> {
    let params = DistortionParams::new(params.delta, params.tz)?;
    // Representative vertices: half-unit grid points {0, 1}^3 (in units of 0.5).
    let mut vertices = Vec::with_capacity(8);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                vertices.push(Vector3::new(i as f64, j as f64, k as f64) * 0.5);
            }
        }
    }
    let center = 0b111;
    vertices[center] = Vector3::repeat(0.5 * (1.0 + params.delta));
    let to_ref = |g: Shift| -> VertexRef {
        let vid = |c: i32| c.rem_euclid(2) as usize;
        VertexRef {
            vertex: vid(g[0]) * 4 + vid(g[1]) * 2 + vid(g[2]),
            shift: [g[0].div_euclid(2), g[1].div_euclid(2), g[2].div_euclid(2)],
        }
    };
    let mut tets = Vec::with_capacity(48);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for path in sliced_cube_paths([i, j, k]) {
                    tets.push(path.map(to_ref));
                }
            }
        }
    }
    let transform = LatticeTransform::disphenoid().scaled_z(params.tz)?;
    UnitCellMesh::new(vertices, tets, transform)
}

/// Mesh selection used by studies and the CLI.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeshSpec {
    Regular,
    ZScaled { tz: f64 },
    Distorted { delta: f64 },
}

impl MeshSpec {
    pub fn build(&self) -> Result<UnitCellMesh> {
        match *self {
            MeshSpec::Regular => Ok(build_disphenoid_cell()),
            MeshSpec::ZScaled { tz } => build_disphenoid_cell().apply_z_scaling(tz),
            MeshSpec::Distorted { delta } => build_distorted_cell(DistortionParams::new(delta, 1.0)?),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            MeshSpec::Regular => "regular".into(),
            MeshSpec::ZScaled { tz } => format!("zscale:{tz}"),
            MeshSpec::Distorted { delta } => format!("distorted:{delta}"),
        }
    }
}

impl std::str::FromStr for MeshSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown mesh spec '{s}'"));
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let num = |a: Option<&str>| -> Result<f64> { a.ok_or_else(bad)?.trim().parse::<f64>().map_err(|_| bad()) };
        match kind.trim() {
            "regular" | "disphenoid" => Ok(MeshSpec::Regular),
            "zscale" | "tz" => Ok(MeshSpec::ZScaled { tz: num(arg)? }),
            "distorted" | "delta" => Ok(MeshSpec::Distorted { delta: num(arg)? }),
            _ => Err(bad()),
        }
    }
}
