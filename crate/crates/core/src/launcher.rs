//! Launch grids on the unit sphere.
//!
//! A platonic solid is subdivided per face and the resulting lattice is
//! projected radially onto the sphere; every point becomes a ray
//! direction carrying a cone of half-angle theta0/(sqrt(3)*n), where
//! theta0 is the solid's adjacent-vertex central angle and n the
//! per-edge subdivision count. Two schemes are provided:
//!
//! * equidistant: equal planar intervals on the flat face, then
//!   projection (the classical construction; denser near vertices).
//! * equiangular: points placed so that consecutive points along every
//!   layer edge subtend equal central angles, built layer by layer from
//!   the face boundary inward; near-uniform density after projection.
//!
//! Both yield exactly 10n^2+2 unique directions on the icosahedron
//! (4n^2+2 on the octahedron, 2n^2+2 on the tetrahedron) after
//! deduplicating the points shared by neighboring faces.

use std::collections::{BTreeSet, HashMap};

use crate::geometry::{angle_between, equal_area_project, slerp, Vec3};

/// Convex triangulated solid with unit vertices centered on the origin.
#[derive(Debug, Clone)]
pub struct Polyhedron {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

impl Polyhedron {
    /// Undirected edge set.
    pub fn edges(&self) -> BTreeSet<(usize, usize)> {
        let mut set = BTreeSet::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        set
    }

    /// Central angle between two adjacent vertices (all edges of a
    /// regular solid subtend the same angle).
    pub fn adjacent_central_angle(&self) -> f64 {
        let (a, b) = *self.edges().iter().next().expect("solid has edges");
        angle_between(self.vertices[a], self.vertices[b])
    }
}

/// Regular icosahedron in canonical orientation: one vertex at +z, one
/// at -z, two staggered rings of five at z = +-1/sqrt(5).
pub fn build_icosahedron() -> Polyhedron {
    let z = 1.0 / 5.0_f64.sqrt();
    let r = 2.0 / 5.0_f64.sqrt();
    let mut vertices = vec![Vec3::Z];
    for k in 0..5 {
        let az = 2.0 * std::f64::consts::PI * k as f64 / 5.0;
        vertices.push(Vec3::new(r * az.cos(), r * az.sin(), z));
    }
    for k in 0..5 {
        let az = 2.0 * std::f64::consts::PI * (k as f64 + 0.5) / 5.0;
        vertices.push(Vec3::new(r * az.cos(), r * az.sin(), -z));
    }
    vertices.push(-Vec3::Z);

    let u = |k: usize| 1 + k % 5;
    let l = |k: usize| 6 + k % 5;
    let mut faces = Vec::with_capacity(20);
    for k in 0..5 {
        faces.push([0, u(k), u(k + 1)]);
        faces.push([u(k), l(k), u(k + 1)]);
        faces.push([l(k), l(k + 1), u(k + 1)]);
        faces.push([11, l(k + 1), l(k)]);
    }
    Polyhedron { vertices, faces }
}

/// Regular octahedron: vertices on the coordinate axes.
pub fn build_octahedron() -> Polyhedron {
    let vertices = vec![Vec3::X, Vec3::Y, Vec3::Z, -Vec3::X, -Vec3::Y, -Vec3::Z];
    let faces = vec![
        [0, 1, 2],
        [1, 3, 2],
        [3, 4, 2],
        [4, 0, 2],
        [1, 0, 5],
        [3, 1, 5],
        [4, 3, 5],
        [0, 4, 5],
    ];
    Polyhedron { vertices, faces }
}

/// Regular tetrahedron: alternating cube corners.
pub fn build_tetrahedron() -> Polyhedron {
    let s = 1.0 / 3.0_f64.sqrt();
    let vertices = vec![
        Vec3::new(s, s, s),
        Vec3::new(s, -s, -s),
        Vec3::new(-s, s, -s),
        Vec3::new(-s, -s, s),
    ];
    let faces = vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]];
    Polyhedron { vertices, faces }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Equidistant,
    Equiangular,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Equidistant => write!(f, "equidistant"),
            Scheme::Equiangular => write!(f, "equiangular"),
        }
    }
}

/// The set of launch directions with their common cone half-angle.
#[derive(Debug, Clone)]
pub struct LaunchGrid {
    pub directions: Vec<Vec3>,
    pub n: usize,
    /// Half-angle of every launched ray cone, radians.
    pub cone_half_angle: f64,
    pub scheme: Scheme,
}

/// Equidistant subdivision: each face edge is divided into n equal
/// planar segments, the interior filled with the matching triangular
/// lattice, and all lattice points projected onto the sphere.
pub fn subdivide_equidistant(poly: &Polyhedron, n: usize) -> LaunchGrid {
    assert!(n >= 1, "subdivision count must be at least 1");
    let mut set = DirectionSet::new(1e-9);
    for face in &poly.faces {
        let (a, b, c) = (
            poly.vertices[face[0]],
            poly.vertices[face[1]],
            poly.vertices[face[2]],
        );
        for i in 0..=n {
            for j in 0..=(n - i) {
                let k = n - i - j;
                let p = a * (i as f64 / n as f64)
                    + b * (j as f64 / n as f64)
                    + c * (k as f64 / n as f64);
                set.insert(p.normalized());
            }
        }
    }
    finish_grid(set, poly, n, Scheme::Equidistant)
}

/// Equiangular subdivision: the face boundary is populated so that
/// consecutive points along each edge subtend equal central angles;
/// each inner layer's corners are built from the outer layer's
/// corner-adjacent points (the two neighbors are summed and the corner
/// subtracted), its edges again filled at equal central angles. Layers
/// shrink by 3 per step; a face whose count is divisible by 3 ends with
/// a single face-center point.
pub fn subdivide_equiangular(poly: &Polyhedron, n: usize) -> LaunchGrid {
    assert!(n >= 1, "subdivision count must be at least 1");
    let mut set = DirectionSet::new(1e-9);
    for face in &poly.faces {
        let mut corners = [
            poly.vertices[face[0]],
            poly.vertices[face[1]],
            poly.vertices[face[2]],
        ];
        let mut m = n;
        loop {
            let [a, b, c] = corners;
            for (p, q) in [(a, b), (b, c), (c, a)] {
                for k in 0..m {
                    set.insert(slerp(p, q, k as f64 / m as f64));
                }
            }
            if m < 4 {
                break;
            }
            let t = 1.0 / m as f64;
            corners = [
                (slerp(a, b, t) + slerp(a, c, t) - a).normalized(),
                (slerp(b, c, t) + slerp(b, a, t) - b).normalized(),
                (slerp(c, a, t) + slerp(c, b, t) - c).normalized(),
            ];
            m -= 3;
        }
        if n.is_multiple_of(3) {
            let [a, b, c] = corners;
            set.insert((a + b + c).normalized());
        }
    }
    finish_grid(set, poly, n, Scheme::Equiangular)
}

fn finish_grid(set: DirectionSet, poly: &Polyhedron, n: usize, scheme: Scheme) -> LaunchGrid {
    let theta0 = poly.adjacent_central_angle();
    LaunchGrid {
        directions: set.directions,
        n,
        cone_half_angle: theta0 / (3.0_f64.sqrt() * n as f64),
        scheme,
    }
}

/// Density statistics of a grid: equal-area projected coordinates,
/// per-direction nearest-neighbor central angle, and the coefficient of
/// variation (stddev/mean) of those angles. CV near zero means uniform
/// ray density.
#[derive(Debug, Clone)]
pub struct DensityStats {
    pub projected: Vec<(f64, f64)>,
    pub nn_angles: Vec<f64>,
    pub coefficient_of_variation: f64,
}

pub fn density_stats(grid: &LaunchGrid) -> DensityStats {
    assert!(grid.directions.len() >= 2, "density needs at least two directions");
    let dirs = &grid.directions;
    let projected = dirs.iter().map(|d| equal_area_project(d.to_sphere_point())).collect();
    let nn_angles: Vec<f64> = (0..dirs.len())
        .map(|i| {
            let mut best = -1.0;
            let mut best_j = 0;
            for j in 0..dirs.len() {
                if j != i {
                    let d = dirs[i].dot(dirs[j]);
                    if d > best {
                        best = d;
                        best_j = j;
                    }
                }
            }
            angle_between(dirs[i], dirs[best_j])
        })
        .collect();
    let mean = nn_angles.iter().sum::<f64>() / nn_angles.len() as f64;
    let var = nn_angles.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / nn_angles.len() as f64;
    DensityStats { projected, nn_angles, coefficient_of_variation: var.sqrt() / mean }
}

/// Direction collector that merges points closer than `tolerance`
/// (chord distance, equivalent to radians at these scales) using a
/// spatial hash over cells of the tolerance size, so near-duplicates
/// are found regardless of which side of a cell boundary they fall on.
struct DirectionSet {
    tolerance: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
    directions: Vec<Vec3>,
}

impl DirectionSet {
    fn new(tolerance: f64) -> DirectionSet {
        DirectionSet { tolerance, cells: HashMap::new(), directions: Vec::new() }
    }

    fn key(&self, p: Vec3) -> [i64; 3] {
        [
            (p.x / self.tolerance).floor() as i64,
            (p.y / self.tolerance).floor() as i64,
            (p.z / self.tolerance).floor() as i64,
        ]
    }

    fn find(&self, p: Vec3) -> Option<usize> {
        let base = self.key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let key = [base[0] + dx, base[1] + dy, base[2] + dz];
                    if let Some(ids) = self.cells.get(&key) {
                        for &id in ids {
                            if self.directions[id].distance(p) < self.tolerance {
                                return Some(id);
                            }
                        }
                    }
                }
            }
        }
        None
    }

    /// Index of `p` in the set, inserting it when no existing direction
    /// lies within tolerance.
    fn insert(&mut self, p: Vec3) -> usize {
        if let Some(id) = self.find(p) {
            return id;
        }
        let id = self.directions.len();
        self.directions.push(p);
        let key = self.key(p);
        self.cells.entry(key).or_default().push(id);
        id
    }
}
