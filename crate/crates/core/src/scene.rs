//! Scene model: a triangle mesh with materials, wedges extracted from
//! mesh adjacency, Tx/Rx placement and the carrier frequency, plus the
//! JSON loader/saver and the synthetic scene generators used by tests
//! and the CLI.
//!
//! Face winding is authoritative: the stored vertex order defines the
//! normal by the right-hand rule, and the loader rejects meshes whose
//! shared edges are traversed in the same direction by both faces
//! instead of guessing a consistent orientation.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Ray, Vec3, EPS_HIT};

/// Angular slack below which two adjacent faces count as coplanar and
/// their shared edge is not a wedge, radians. Separates genuine wedges
/// from tessellation seams.
pub const COPLANARITY_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("reading scene file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing scene file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("frequency must be positive, got {0}")]
    BadFrequency(f64),
    #[error("tx and rx coincide")]
    TxEqualsRx,
    #[error("material {index} ({name}): {reason}")]
    BadMaterial { index: usize, name: String, reason: String },
    #[error("face {face} references vertex {vertex} but only {count} vertices exist")]
    MissingVertex { face: usize, vertex: usize, count: usize },
    #[error("face {face} references material {material} but only {count} materials exist")]
    MissingMaterial { face: usize, material: usize, count: usize },
    #[error("face {face} is degenerate (area {area:.3e} m^2)")]
    DegenerateFace { face: usize, area: f64 },
    #[error("faces {first} and {second} use the same vertex set")]
    DuplicateFace { first: usize, second: usize },
    #[error("faces {first} and {second} traverse their shared edge in the same direction")]
    InconsistentWinding { first: usize, second: usize },
    #[error("wedge {wedge} references missing face {face}")]
    WedgeMissingFace { wedge: usize, face: usize },
    #[error("wedge {wedge}: faces {first} and {second} do not share exactly its edge")]
    WedgeEdgeMismatch { wedge: usize, first: usize, second: usize },
    #[error("wedge {wedge}: faces are coplanar within the wedge threshold")]
    WedgeCoplanar { wedge: usize },
    #[error("{which} at {at:?} must lie strictly inside the generated scene")]
    PointOutside { which: &'static str, at: Vec3 },
}

/// Surface material: relative permittivity and conductivity, enough for
/// a scalar Fresnel reflection coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    /// Relative permittivity, >= 1.
    pub eps_r: f64,
    /// Conductivity in S/m, >= 0.
    pub sigma: f64,
}

/// One mesh triangle with its derived frame. `corners` caches the vertex
/// positions so the tracing hot loop avoids index chasing.
#[derive(Debug, Clone)]
pub struct Face {
    pub id: usize,
    pub v: [usize; 3],
    pub material: usize,
    pub corners: [Vec3; 3],
    /// Unit normal by right-hand rule over the stored winding.
    pub normal: Vec3,
    /// Triangle area, m^2.
    pub area: f64,
}

impl Face {
    fn build(
        id: usize,
        v: [usize; 3],
        material: usize,
        vertices: &[Vec3],
    ) -> Result<Face, SceneError> {
        for &idx in &v {
            if idx >= vertices.len() {
                return Err(SceneError::MissingVertex { face: id, vertex: idx, count: vertices.len() });
            }
        }
        let corners = [vertices[v[0]], vertices[v[1]], vertices[v[2]]];
        let cross = (corners[1] - corners[0]).cross(corners[2] - corners[0]);
        let area = 0.5 * cross.norm();
        if area <= 1e-12 {
            return Err(SceneError::DegenerateFace { face: id, area });
        }
        Ok(Face { id, v, material, corners, normal: cross.normalized(), area })
    }

    pub fn centroid(&self) -> Vec3 {
        (self.corners[0] + self.corners[1] + self.corners[2]) / 3.0
    }

    /// A point on the face plane (first corner).
    pub fn plane_point(&self) -> Vec3 {
        self.corners[0]
    }
}

/// An edge shared by two non-coplanar faces: the site of diffraction.
///
/// The edge is oriented the way `faces[0]` traverses it, and `t0`/`n0`
/// are that face's in-plane inward tangent and normal. Directions
/// around the edge are measured from `t0` toward `n0`, so the air
/// region spans (0, exterior_angle).
#[derive(Debug, Clone)]
pub struct Wedge {
    pub id: usize,
    pub edge: [usize; 2],
    pub endpoints: [Vec3; 2],
    pub faces: [usize; 2],
    /// Dihedral angle spanned by the air region, radians, in (0, 2*pi).
    pub exterior_angle: f64,
    /// Unit vector along the edge, endpoints[0] -> endpoints[1].
    pub edge_dir: Vec3,
    /// In-plane tangent of faces[0] pointing into that face.
    pub t0: Vec3,
    /// Normal of faces[0].
    pub n0: Vec3,
}

impl Wedge {
    /// Angle of a direction around the edge, measured from the first
    /// face's half-plane toward its air side, in [0, 2*pi). `None` when
    /// the direction is parallel to the edge.
    pub fn angle_around_edge(&self, dir: Vec3) -> Option<f64> {
        let perp = dir - self.edge_dir * dir.dot(self.edge_dir);
        if perp.norm_squared() < 1e-24 {
            return None;
        }
        let phi = perp.dot(self.n0).atan2(perp.dot(self.t0));
        Some(phi.rem_euclid(2.0 * std::f64::consts::PI))
    }

    /// True when a direction away from the edge points into the air
    /// region (strictly between the two faces on the open side).
    pub fn in_exterior(&self, dir: Vec3) -> bool {
        match self.angle_around_edge(dir) {
            Some(phi) => phi > 1e-12 && phi < self.exterior_angle - 1e-12,
            None => false,
        }
    }
}

/// Nearest face intersection along a ray.
#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub face: usize,
    pub t: f64,
    pub point: Vec3,
}

/// Immutable scene: mesh, wedges, materials, endpoints, frequency.
#[derive(Debug, Clone)]
pub struct Scene {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<Face>,
    pub wedges: Vec<Wedge>,
    pub materials: Vec<Material>,
    pub tx: Vec3,
    pub rx: Vec3,
    /// Carrier frequency, Hz.
    pub frequency: f64,
    /// Non-fatal mesh reports (non-manifold edges) from wedge extraction.
    pub warnings: Vec<String>,
}

/// On-disk scene schema. Lengths in meters, frequency in Hz; wedges are
/// optional and extracted from mesh adjacency when absent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneFile {
    pub frequency_hz: f64,
    pub tx: Vec3,
    pub rx: Vec3,
    pub materials: Vec<Material>,
    pub vertices: Vec<Vec3>,
    pub faces: Vec<FaceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wedges: Option<Vec<WedgeSpec>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaceSpec {
    pub v: [usize; 3],
    pub material: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WedgeSpec {
    pub edge: [usize; 2],
    pub faces: [usize; 2],
}

impl Scene {
    pub fn load(path: impl AsRef<Path>) -> Result<Scene, SceneError> {
        let text = fs::read_to_string(path)?;
        let file: SceneFile = serde_json::from_str(&text)?;
        Scene::from_file_model(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SceneError> {
        let text = serde_json::to_string_pretty(&self.to_file_model())?;
        fs::write(path, text)?;
        Ok(())
    }

    pub fn to_file_model(&self) -> SceneFile {
        SceneFile {
            frequency_hz: self.frequency,
            tx: self.tx,
            rx: self.rx,
            materials: self.materials.clone(),
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|f| FaceSpec { v: f.v, material: f.material }).collect(),
            wedges: Some(
                self.wedges.iter().map(|w| WedgeSpec { edge: w.edge, faces: w.faces }).collect(),
            ),
        }
    }

    // negated comparisons are deliberate: they reject NaN inputs too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn from_file_model(file: SceneFile) -> Result<Scene, SceneError> {
        if !(file.frequency_hz > 0.0) {
            return Err(SceneError::BadFrequency(file.frequency_hz));
        }
        if file.tx.distance(file.rx) < 1e-12 {
            return Err(SceneError::TxEqualsRx);
        }
        for (index, m) in file.materials.iter().enumerate() {
            if !(m.eps_r >= 1.0) {
                return Err(SceneError::BadMaterial {
                    index,
                    name: m.name.clone(),
                    reason: format!("relative permittivity {} < 1", m.eps_r),
                });
            }
            if !(m.sigma >= 0.0) {
                return Err(SceneError::BadMaterial {
                    index,
                    name: m.name.clone(),
                    reason: format!("conductivity {} < 0", m.sigma),
                });
            }
        }

        let mut faces = Vec::with_capacity(file.faces.len());
        let mut seen_triples: HashMap<[usize; 3], usize> = HashMap::new();
        for (id, spec) in file.faces.iter().enumerate() {
            if spec.material >= file.materials.len() {
                return Err(SceneError::MissingMaterial {
                    face: id,
                    material: spec.material,
                    count: file.materials.len(),
                });
            }
            let face = Face::build(id, spec.v, spec.material, &file.vertices)?;
            let mut key = spec.v;
            key.sort_unstable();
            if let Some(&first) = seen_triples.get(&key) {
                return Err(SceneError::DuplicateFace { first, second: id });
            }
            seen_triples.insert(key, id);
            faces.push(face);
        }

        check_winding(&faces)?;

        let (wedges, warnings) = match file.wedges {
            Some(specs) => (build_wedges_from_specs(&specs, &faces, &file.vertices)?, Vec::new()),
            None => extract_wedges(&faces, COPLANARITY_THRESHOLD),
        };

        Ok(Scene {
            vertices: file.vertices,
            faces,
            wedges,
            materials: file.materials,
            tx: file.tx,
            rx: file.rx,
            frequency: file.frequency_hz,
            warnings,
        })
    }

    /// Scene with no geometry at all; free-space propagation only.
    pub fn empty(tx: Vec3, rx: Vec3, frequency_hz: f64) -> Scene {
        Scene {
            vertices: Vec::new(),
            faces: Vec::new(),
            wedges: Vec::new(),
            materials: Vec::new(),
            tx,
            rx,
            frequency: frequency_hz,
            warnings: Vec::new(),
        }
    }

    pub fn material_of(&self, face: usize) -> &Material {
        &self.materials[self.faces[face].material]
    }

    /// Nearest face intersection with t > EPS_HIT.
    pub fn first_hit(&self, ray: &Ray) -> Option<Hit> {
        let mut best: Option<Hit> = None;
        for face in &self.faces {
            if let Some((t, _)) =
                crate::geometry::intersect_triangle(ray, face.corners[0], face.corners[1], face.corners[2])
            {
                if best.is_none_or(|b| t < b.t) {
                    best = Some(Hit { face: face.id, t, point: ray.point_at(t) });
                }
            }
        }
        best
    }

    /// True when any face blocks the open segment between `a` and `b`.
    /// Faces touching the endpoints themselves do not count: only hits
    /// strictly inside (EPS_HIT, |b-a| - EPS_HIT) block.
    pub fn occluded(&self, a: Vec3, b: Vec3) -> bool {
        let len = a.distance(b);
        if len <= 2.0 * EPS_HIT {
            return false;
        }
        let ray = Ray::new(a, b - a);
        let limit = len - EPS_HIT;
        self.faces.iter().any(|face| {
            crate::geometry::intersect_triangle(&ray, face.corners[0], face.corners[1], face.corners[2])
                .is_some_and(|(t, _)| t < limit)
        })
    }
}

/// Reject meshes where an edge shared by exactly two faces is traversed
/// in the same direction by both (inconsistent winding). Edges shared by
/// more than two faces are left to the wedge extractor's warning path.
fn check_winding(faces: &[Face]) -> Result<(), SceneError> {
    let mut edges: BTreeMap<(usize, usize), Vec<(usize, bool)>> = BTreeMap::new();
    for face in faces {
        for k in 0..3 {
            let from = face.v[k];
            let to = face.v[(k + 1) % 3];
            let key = (from.min(to), from.max(to));
            edges.entry(key).or_default().push((face.id, from < to));
        }
    }
    for users in edges.values() {
        if users.len() == 2 && users[0].1 == users[1].1 {
            return Err(SceneError::InconsistentWinding { first: users[0].0, second: users[1].0 });
        }
    }
    Ok(())
}

/// One wedge per mesh edge shared by exactly two faces whose dihedral
/// angle deviates from a flat joint by more than `threshold` radians.
/// Edges shared by more than two faces are reported in the warning list
/// rather than silently dropped.
pub fn extract_wedges(faces: &[Face], threshold: f64) -> (Vec<Wedge>, Vec<String>) {
    let mut edges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for face in faces {
        for k in 0..3 {
            let from = face.v[k];
            let to = face.v[(k + 1) % 3];
            let key = (from.min(to), from.max(to));
            edges.entry(key).or_default().push(face.id);
        }
    }
    let mut wedges = Vec::new();
    let mut warnings = Vec::new();
    for (&(lo, hi), users) in &edges {
        match users.len() {
            2 => {
                let (a, b) = (users[0].min(users[1]), users[0].max(users[1]));
                if let Some(w) = make_wedge(wedges.len(), [lo, hi], &faces[a], &faces[b], threshold)
                {
                    wedges.push(w);
                }
            }
            n if n > 2 => {
                warnings.push(format!("edge ({lo}, {hi}) shared by {n} faces: {users:?}"));
            }
            _ => {}
        }
    }
    (wedges, warnings)
}

/// Build the wedge for an edge shared by faces `f0` and `f1`, or `None`
/// when the faces are coplanar within `threshold`. The exterior angle is
/// measured from f0's half-plane, rotating through f0's air side, until
/// f1's half-plane is reached.
fn make_wedge(id: usize, edge: [usize; 2], f0: &Face, f1: &Face, threshold: f64) -> Option<Wedge> {
    // orient the edge the way f0 traverses it
    let forward_in_f0 =
        (0..3).any(|k| f0.v[k] == edge[0] && f0.v[(k + 1) % 3] == edge[1]);
    let (e0, e1) = if forward_in_f0 { (edge[0], edge[1]) } else { (edge[1], edge[0]) };
    let p0 = f0.corners[f0.v.iter().position(|&v| v == e0).expect("edge vertex in face")];
    let p1 = f0.corners[f0.v.iter().position(|&v| v == e1).expect("edge vertex in face")];
    let edge_dir = (p1 - p0).normalized();
    let n0 = f0.normal;
    let t0 = n0.cross(edge_dir);
    // f1 traverses the edge the opposite way (winding already checked)
    let t1 = f1.normal.cross(-edge_dir);
    let phi = t1.dot(n0).atan2(t1.dot(t0)).rem_euclid(2.0 * std::f64::consts::PI);
    if (phi - std::f64::consts::PI).abs() <= threshold {
        return None;
    }
    Some(Wedge {
        id,
        edge: [e0, e1],
        endpoints: [p0, p1],
        faces: [f0.id, f1.id],
        exterior_angle: phi,
        edge_dir,
        t0,
        n0,
    })
}

fn build_wedges_from_specs(
    specs: &[WedgeSpec],
    faces: &[Face],
    vertices: &[Vec3],
) -> Result<Vec<Wedge>, SceneError> {
    let mut wedges = Vec::with_capacity(specs.len());
    for (id, spec) in specs.iter().enumerate() {
        for &f in &spec.faces {
            if f >= faces.len() {
                return Err(SceneError::WedgeMissingFace { wedge: id, face: f });
            }
        }
        for &v in &spec.edge {
            if v >= vertices.len() {
                return Err(SceneError::WedgeEdgeMismatch {
                    wedge: id,
                    first: spec.faces[0],
                    second: spec.faces[1],
                });
            }
        }
        let (f0, f1) = (&faces[spec.faces[0]], &faces[spec.faces[1]]);
        let shares = |f: &Face| spec.edge.iter().all(|v| f.v.contains(v));
        if !shares(f0) || !shares(f1) || spec.faces[0] == spec.faces[1] {
            return Err(SceneError::WedgeEdgeMismatch {
                wedge: id,
                first: spec.faces[0],
                second: spec.faces[1],
            });
        }
        let key = [spec.edge[0].min(spec.edge[1]), spec.edge[0].max(spec.edge[1])];
        match make_wedge(id, key, f0, f1, COPLANARITY_THRESHOLD) {
            Some(w) => wedges.push(w),
            None => return Err(SceneError::WedgeCoplanar { wedge: id }),
        }
    }
    Ok(wedges)
}

/// Rectangular room: six axis-aligned walls from the origin to
/// `dimensions`, each wall split into `divisions` x `divisions` cells of
/// two triangles, normals pointing into the room. `divisions = 1` gives
/// the minimal 12-triangle box.
pub fn make_shoebox_divided(
    dimensions: Vec3,
    material: Material,
    tx: Vec3,
    rx: Vec3,
    frequency_hz: f64,
    divisions: usize,
) -> Result<Scene, SceneError> {
    let d = dimensions;
    let inside = |p: Vec3| {
        p.x > 0.0 && p.x < d.x && p.y > 0.0 && p.y < d.y && p.z > 0.0 && p.z < d.z
    };
    if !inside(tx) {
        return Err(SceneError::PointOutside { which: "tx", at: tx });
    }
    if !inside(rx) {
        return Err(SceneError::PointOutside { which: "rx", at: rx });
    }
    let n = divisions.max(1);

    let mut pool = VertexPool::default();
    let mut faces = Vec::new();
    // walls as (origin, full edge u, full edge v); normal = u x v points
    // into the room
    let walls = [
        (Vec3::ZERO, Vec3::new(d.x, 0.0, 0.0), Vec3::new(0.0, d.y, 0.0)), // floor, +z
        (Vec3::new(0.0, 0.0, d.z), Vec3::new(0.0, d.y, 0.0), Vec3::new(d.x, 0.0, 0.0)), // ceiling, -z
        (Vec3::ZERO, Vec3::new(0.0, 0.0, d.z), Vec3::new(d.x, 0.0, 0.0)), // y = 0, +y
        (Vec3::new(0.0, d.y, 0.0), Vec3::new(d.x, 0.0, 0.0), Vec3::new(0.0, 0.0, d.z)), // y = d.y, -y
        (Vec3::ZERO, Vec3::new(0.0, d.y, 0.0), Vec3::new(0.0, 0.0, d.z)), // x = 0, +x
        (Vec3::new(d.x, 0.0, 0.0), Vec3::new(0.0, 0.0, d.z), Vec3::new(0.0, d.y, 0.0)), // x = d.x, -x
    ];
    for (origin, eu, ev) in walls {
        let corner = |a: usize, b: usize| origin + eu * (a as f64 / n as f64) + ev * (b as f64 / n as f64);
        for a in 0..n {
            for b in 0..n {
                let p00 = pool.insert(corner(a, b));
                let p10 = pool.insert(corner(a + 1, b));
                let p11 = pool.insert(corner(a + 1, b + 1));
                let p01 = pool.insert(corner(a, b + 1));
                faces.push(FaceSpec { v: [p00, p10, p11], material: 0 });
                faces.push(FaceSpec { v: [p00, p11, p01], material: 0 });
            }
        }
    }
    Scene::from_file_model(SceneFile {
        frequency_hz,
        tx,
        rx,
        materials: vec![material],
        vertices: pool.vertices,
        faces,
        wedges: None,
    })
}

/// Minimal 12-triangle rectangular room.
pub fn make_shoebox(
    dimensions: Vec3,
    material: Material,
    tx: Vec3,
    rx: Vec3,
    frequency_hz: f64,
) -> Result<Scene, SceneError> {
    make_shoebox_divided(dimensions, material, tx, rx, frequency_hz, 1)
}

/// Outdoor diffraction scene: a ground plane plus a triangular ridge
/// (two slopes meeting at a horizontal apex edge). The apex is the only
/// wedge; with Tx and Rx on opposite sides of the ridge and below the
/// apex, the sole propagation mechanism at reflection order 0 is the
/// single diffraction over the apex.
///
/// The ridge runs along y, centered on the origin: apex from
/// (0, -length/2, height) to (0, length/2, height), slopes descending to
/// x = -half_width and x = +half_width at ground level. The ground is a
/// square of half-extent `ground_half` at z = 0.
#[allow(clippy::too_many_arguments)]
pub fn make_ridge_scene(
    height: f64,
    half_width: f64,
    length: f64,
    ground_half: f64,
    material: Material,
    tx: Vec3,
    rx: Vec3,
    frequency_hz: f64,
) -> Result<Scene, SceneError> {
    for (which, p) in [("tx", tx), ("rx", rx)] {
        let clear_of_ridge = p.x.abs() > half_width || p.y.abs() > length / 2.0;
        if p.z <= 0.0 || !clear_of_ridge || p.x.abs() >= ground_half || p.y.abs() >= ground_half {
            return Err(SceneError::PointOutside { which, at: p });
        }
    }
    let (h, w, l2, g) = (height, half_width, length / 2.0, ground_half);
    let vertices = vec![
        Vec3::new(0.0, -l2, h),  // 0 ridge front
        Vec3::new(0.0, l2, h),   // 1 ridge back
        Vec3::new(-w, -l2, 0.0), // 2 left base front
        Vec3::new(-w, l2, 0.0),  // 3 left base back
        Vec3::new(w, -l2, 0.0),  // 4 right base front
        Vec3::new(w, l2, 0.0),   // 5 right base back
        Vec3::new(-g, -g, 0.0),  // 6 ground corners
        Vec3::new(g, -g, 0.0),   // 7
        Vec3::new(g, g, 0.0),    // 8
        Vec3::new(-g, g, 0.0),   // 9
    ];
    let faces = vec![
        // left slope, normal up-left; first triangle owns the apex edge
        FaceSpec { v: [0, 1, 2], material: 0 },
        FaceSpec { v: [1, 3, 2], material: 0 },
        // right slope, normal up-right; apex traversed the opposite way
        FaceSpec { v: [1, 0, 4], material: 0 },
        FaceSpec { v: [4, 5, 1], material: 0 },
        // ground, normal +z
        FaceSpec { v: [6, 7, 8], material: 0 },
        FaceSpec { v: [6, 8, 9], material: 0 },
    ];
    Scene::from_file_model(SceneFile {
        frequency_hz,
        tx,
        rx,
        materials: vec![material],
        vertices,
        faces,
        wedges: None,
    })
}

/// Vertex interner keyed on exact f64 bits, so coordinates produced by
/// the same arithmetic collapse to one index and wall seams share edges.
#[derive(Default)]
struct VertexPool {
    map: HashMap<[u64; 3], usize>,
    vertices: Vec<Vec3>,
}

impl VertexPool {
    fn insert(&mut self, p: Vec3) -> usize {
        let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        *self.map.entry(key).or_insert_with(|| {
            self.vertices.push(p);
            self.vertices.len() - 1
        })
    }
}
