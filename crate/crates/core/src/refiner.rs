//! Iterative ray-cone refinement.
//!
//! A captured path only locates the receiver to within the launch
//! cone's half-angle. Refinement shrinks that bracket: the cone is
//! split into six children (same coverage, half-angle reduced by
//! sqrt(3)), each child's axis is re-traced through the path's pinned
//! interaction sequence, and the child with the smallest error angle
//! becomes the next cone. Ten iterations cut the error by a factor of
//! 3^5 = 243, about 24 dB, without ever changing what the path is.
//!
//! Re-tracing is deliberately forgiving: reflections use the faces'
//! infinite planes and diffractions the edges' infinite lines, so a
//! trial axis a fraction of a degree off the recorded one cannot lose
//! the sequence merely by slipping off a triangle's edge. The final
//! result is re-checked against the real bounded scene.

use crate::geometry::{
    self, angle_between, orthonormal_basis, point_to_ray_distance, Ray, RayCone, Vec3, EPS_HIT,
};
use crate::scene::Scene;
use crate::tracer::{self, Interaction, InteractionKind, PropagationPath};

/// Split a cone into six children covering its disk: each child tilts
/// off the parent axis by parent_half/sqrt(3), at azimuths 60 degrees
/// apart, with half-angle parent_half/sqrt(3).
pub fn sub_cones(cone: &RayCone) -> [RayCone; 6] {
    let child_half = cone.half_angle / 3f64.sqrt();
    std::array::from_fn(|k| {
        let phi = k as f64 * 60f64.to_radians();
        RayCone {
            origin: cone.origin,
            axis: geometry::tilt_axis(cone.axis, child_half, phi),
            half_angle: child_half,
        }
    })
}

#[derive(Debug, Clone, Copy)]
pub struct RefineConfig {
    pub max_iterations: usize,
    /// Stop once the error angle drops below this, radians.
    pub angle_tolerance: f64,
    /// Keep the full per-iteration path in the trace (for reports).
    pub keep_history: bool,
}

impl Default for RefineConfig {
    fn default() -> RefineConfig {
        RefineConfig {
            max_iterations: 10,
            angle_tolerance: 0.01f64.to_radians(),
            keep_history: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Error angle reached the configured tolerance.
    Tolerance,
    /// Iteration budget exhausted.
    MaxIterations,
    /// No sub-cone could reproduce the interaction sequence.
    LostPath,
}

#[derive(Debug, Clone)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub index: usize,
    /// The cone chosen by this iteration.
    pub cone: RayCone,
    /// Error angle of the iteration's best child (may exceed the best
    /// seen so far; individual iterations are allowed to upturn).
    pub error_angle: f64,
    pub total_length: f64,
    /// How many of the six children reproduced the sequence.
    pub candidates: usize,
    /// Full path state at this iteration, kept when requested.
    pub path: Option<PropagationPath>,
}

#[derive(Debug, Clone)]
pub struct RefinementTrace {
    pub iterations: Vec<IterationRecord>,
    pub terminated_by: Termination,
    /// Result of the final re-check against real face bounds and
    /// occlusion (infinite-plane re-tracing can drift off a face).
    pub final_valid: bool,
}

/// Shrink a captured path's error angle by six-way cone subdivision.
/// The interaction sequence is pinned; only the launch direction moves.
/// Returns the best path seen (never worse than the input in the
/// refinement objective) plus the iteration trace.
pub fn refine_path(
    path: &PropagationPath,
    scene: &Scene,
    cfg: &RefineConfig,
) -> (PropagationPath, RefinementTrace) {
    let mut best = path.clone();
    let mut cone = path.cone;
    let mut pinned = path.interactions.clone();
    let mut iterations = Vec::new();
    let mut terminated_by = Termination::MaxIterations;
    // Objective of the captured path itself, so the first iteration
    // only displaces it on a real improvement.
    let mut best_objective = retrace(scene, &pinned, path.launch_direction, &[0.0])
        .map_or(f64::INFINITY, |p| p.objective);

    for index in 1..=cfg.max_iterations {
        if best_objective <= cfg.angle_tolerance {
            terminated_by = Termination::Tolerance;
            break;
        }
        let children = sub_cones(&cone);
        let child_half = children[0].half_angle;
        let fan = [0.0, -0.5 * child_half, 0.5 * child_half, -child_half, child_half];
        let mut candidates = 0;
        let mut winner: Option<(usize, Pinned)> = None;
        for (ci, child) in children.iter().enumerate() {
            if let Some(p) = retrace(scene, &pinned, child.axis, &fan) {
                candidates += 1;
                if winner.as_ref().is_none_or(|(_, w)| p.objective < w.objective) {
                    winner = Some((ci, p));
                }
            }
        }
        let Some((ci, result)) = winner else {
            terminated_by = Termination::LostPath;
            break;
        };
        cone = children[ci];
        pinned = result.interactions.clone();
        let iter_path = PropagationPath {
            interactions: result.interactions,
            launch_direction: cone.axis,
            arrival_direction: result.arrival_direction,
            total_length: result.total_length,
            miss_distance: result.miss_distance,
            error_angle: result.error_angle,
            cone,
            grid_index: path.grid_index,
        };
        if result.objective < best_objective {
            best_objective = result.objective;
            best = iter_path.clone();
        }
        iterations.push(IterationRecord {
            index,
            cone,
            error_angle: iter_path.error_angle,
            total_length: iter_path.total_length,
            candidates,
            path: cfg.keep_history.then_some(iter_path),
        });
    }

    rebind_coplanar_faces(&mut best, scene);
    let final_valid = tracer::validate_path(&best, scene);
    (best, RefinementTrace { iterations, terminated_by, final_valid })
}

/// Walls triangulated into several coplanar faces make path identity
/// ambiguous near the shared edges: the shooter can capture a bounce
/// via one triangle while the exact specular point lies a few
/// centimeters into its coplanar neighbor. Re-label such reflections
/// with the face that actually contains the refined point. Geometry is
/// untouched; points that escaped the surface entirely stay as they
/// are and fail the final validity check.
fn rebind_coplanar_faces(path: &mut PropagationPath, scene: &Scene) {
    for interaction in &mut path.interactions {
        let InteractionKind::Reflection { face } = interaction.kind else {
            continue;
        };
        let recorded = &scene.faces[face];
        let inside = |f: &crate::scene::Face| {
            geometry::point_in_triangle(
                interaction.point,
                f.corners[0],
                f.corners[1],
                f.corners[2],
                1e-9,
                1e-6,
            )
        };
        if inside(recorded) {
            continue;
        }
        let coplanar_with = |f: &crate::scene::Face| {
            f.normal.dot(recorded.normal).abs() > 1.0 - 1e-9
                && (f.centroid() - recorded.centroid()).dot(recorded.normal).abs() < 1e-9
        };
        if let Some(partner) = scene
            .faces
            .iter()
            .position(|f| f.id != face && coplanar_with(f) && inside(f))
        {
            interaction.kind = InteractionKind::Reflection { face: partner };
        }
    }
}

/// Error-angle improvement in decibels; +inf when the error reaches
/// exactly zero.
pub fn error_decibels(before: f64, after: f64) -> f64 {
    if after == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (before / after).log10()
    }
}

struct Pinned {
    interactions: Vec<Interaction>,
    arrival_direction: Vec3,
    total_length: f64,
    miss_distance: f64,
    error_angle: f64,
    /// Minimization target: the receiver miss angle plus, per
    /// diffraction, the angular miss between the trial ray and the
    /// edge line. Hitting the receiver alone does not pin a
    /// diffraction path down (many launch directions reach Rx via
    /// different edge points); only the ray that actually grazes the
    /// edge is the physical one, so the edge miss must shrink too.
    objective: f64,
}

/// Re-trace the pinned sequence from a trial launch direction.
/// Reflections mirror off infinite planes; a diffraction re-emits on
/// the Keller cone at azimuths fanned around the recorded direction,
/// and the best fan member wins. None when any leg fails (plane behind
/// the ray, ray parallel to an edge, receiver behind the last segment).
fn retrace(scene: &Scene, pinned: &[Interaction], launch: Vec3, fan: &[f64]) -> Option<Pinned> {
    let mut best: Option<Pinned> = None;
    let mut acc = Vec::with_capacity(pinned.len());
    walk(scene, pinned, 0, scene.tx, launch, 0.0, 0.0, &mut acc, fan, &mut best);
    best
}

#[allow(clippy::too_many_arguments)]
fn walk(
    scene: &Scene,
    pinned: &[Interaction],
    idx: usize,
    origin: Vec3,
    direction: Vec3,
    length: f64,
    edge_miss: f64,
    acc: &mut Vec<Interaction>,
    fan: &[f64],
    best: &mut Option<Pinned>,
) {
    if idx == pinned.len() {
        let ray = Ray { origin, direction };
        let (miss, along) = point_to_ray_distance(scene.rx, &ray);
        if along <= 0.0 {
            return;
        }
        let total = length + along;
        let error_angle = miss.atan2(total);
        let objective = error_angle + edge_miss;
        if best.as_ref().is_none_or(|b| objective < b.objective) {
            *best = Some(Pinned {
                interactions: acc.clone(),
                arrival_direction: direction,
                total_length: total,
                miss_distance: miss,
                error_angle,
                objective,
            });
        }
        return;
    }
    let ray = Ray { origin, direction };
    match pinned[idx].kind {
        InteractionKind::Reflection { face } => {
            let f = &scene.faces[face];
            let Some(t) = geometry::ray_plane(&ray, f.plane_point(), f.normal) else {
                return;
            };
            if t <= EPS_HIT {
                return;
            }
            let point = ray.point_at(t);
            acc.push(Interaction { kind: InteractionKind::Reflection { face }, point });
            walk(
                scene,
                pinned,
                idx + 1,
                point,
                geometry::mirror_reflect(direction, f.normal),
                length + t,
                edge_miss,
                acc,
                fan,
                best,
            );
            acc.pop();
        }
        InteractionKind::Diffraction { wedge, direction: recorded } => {
            let w = &scene.wedges[wedge];
            let Some((t, point)) = geometry::ray_line_closest(&ray, w.endpoints[0], w.edge_dir)
            else {
                return;
            };
            if t <= EPS_HIT {
                return;
            }
            // angular distance of the trial ray from the edge itself,
            // normalized the same way as the receiver miss
            let off_edge = ray.point_at(t).distance(point).atan2(length + t);
            let beta = angle_between(direction, w.edge_dir);
            if !(1e-9..=std::f64::consts::PI - 1e-9).contains(&beta) {
                return;
            }
            let (u, v) = orthonormal_basis(w.edge_dir);
            let phi_rec = recorded.dot(v).atan2(recorded.dot(u));
            let (sb, cb) = beta.sin_cos();
            let leg = point.distance(origin);
            for offset in fan {
                let phi = phi_rec + offset;
                let out = w.edge_dir * cb + (u * phi.cos() + v * phi.sin()) * sb;
                acc.push(Interaction {
                    kind: InteractionKind::Diffraction { wedge, direction: out },
                    point,
                });
                walk(
                    scene,
                    pinned,
                    idx + 1,
                    point,
                    out,
                    length + leg,
                    edge_miss + off_edge,
                    acc,
                    fan,
                    best,
                );
                acc.pop();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::launcher::{build_icosahedron, subdivide_equiangular};
    use crate::scene::{make_ridge_scene, make_shoebox, Material};
    use crate::tracer::{dedup_paths, sequence_key, shoot, TraceConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn concrete() -> Material {
        Material { name: "concrete".into(), eps_r: 5.31, sigma: 0.139 }
    }

    fn shoebox_paths(n: usize) -> (Scene, crate::launcher::LaunchGrid, Vec<PropagationPath>) {
        let scene = make_shoebox(
            Vec3::new(5.0, 4.0, 3.0),
            concrete(),
            Vec3::new(1.0, 1.1, 1.5),
            Vec3::new(4.0, 2.9, 1.3),
            2.4e9,
        )
        .unwrap();
        let grid = subdivide_equiangular(&build_icosahedron(), n);
        let paths = dedup_paths(shoot(&scene, &grid, &TraceConfig::default()));
        (scene, grid, paths)
    }

    #[test]
    fn six_children_shrink_by_sqrt3() {
        let parent = RayCone {
            origin: Vec3::ZERO,
            axis: Vec3::new(0.3, -0.4, 0.86).normalized(),
            half_angle: 2f64.to_radians(),
        };
        let kids = sub_cones(&parent);
        let expect = parent.half_angle / 3f64.sqrt();
        for kid in &kids {
            assert!((kid.half_angle - expect).abs() < 1e-15);
            assert!((angle_between(kid.axis, parent.axis) - expect).abs() < 1e-12);
        }
        // azimuths 60 degrees apart
        for k in 0..6 {
            let a = kids[k].axis;
            let b = kids[(k + 1) % 6].axis;
            let expect_gap = 2.0 * expect.sin() * 30f64.to_radians().sin(); // chord of 60 deg on the tilt circle
            let gap = (a - b).norm();
            assert!((gap - expect_gap).abs() < 1e-9, "gap {} vs {}", gap, expect_gap);
        }
    }

    #[test]
    fn first_child_of_vertical_cone_lies_in_xz_plane() {
        let parent = RayCone { origin: Vec3::ZERO, axis: Vec3::Z, half_angle: 0.1 };
        let kids = sub_cones(&parent);
        assert!(kids[0].axis.y.abs() < 1e-15);
        assert!(kids[0].axis.x > 0.0);
    }

    #[test]
    fn children_cover_parent_disk() {
        let parent = RayCone {
            origin: Vec3::ZERO,
            axis: Vec3::new(-0.5, 0.7, 0.51).normalized(),
            half_angle: 1.744f64.to_radians(),
        };
        let kids = sub_cones(&parent);
        let (u, w) = orthonormal_basis(parent.axis);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100_000 {
            // uniform over the parent's spherical cap
            let cos_t = 1.0 - rng.gen::<f64>() * (1.0 - parent.half_angle.cos());
            let sin_t = (1.0 - cos_t * cos_t).sqrt();
            let phi = rng.gen::<f64>() * std::f64::consts::TAU;
            let dir = parent.axis * cos_t + (u * phi.cos() + w * phi.sin()) * sin_t;
            let covered = kids
                .iter()
                .any(|k| angle_between(k.axis, dir) <= k.half_angle + 1e-9);
            assert!(covered, "direction at tilt {} uncovered", cos_t.acos());
        }
    }

    #[test]
    fn already_exact_path_terminates_on_tolerance_unchanged() {
        let grid = subdivide_equiangular(&build_icosahedron(), 6);
        let dir = grid.directions[31];
        let tx = Vec3::new(0.1, 0.2, 0.3);
        let scene = Scene::empty(tx, tx + dir * 5.0, 2.4e9);
        let paths = dedup_paths(shoot(&scene, &grid, &TraceConfig::default()));
        assert_eq!(paths.len(), 1);
        assert!(paths[0].error_angle < 1e-12);
        let (refined, trace) = refine_path(&paths[0], &scene, &RefineConfig::default());
        assert_eq!(trace.terminated_by, Termination::Tolerance);
        assert!(trace.iterations.is_empty());
        assert!((refined.error_angle - paths[0].error_angle).abs() < 1e-15);
        assert_eq!(refined.launch_direction.distance(paths[0].launch_direction), 0.0);
        assert!(trace.final_valid);
    }

    #[test]
    fn iteration_errors_respect_subdivision_bound() {
        let (scene, grid, paths) = shoebox_paths(13);
        assert!(paths.len() >= 7);
        let cfg = RefineConfig { max_iterations: 10, angle_tolerance: 0.0, keep_history: false };
        for path in &paths {
            let (refined, trace) = refine_path(path, &scene, &cfg);
            assert_eq!(trace.iterations.len(), 10);
            for rec in &trace.iterations {
                let bound = grid.cone_half_angle / 3f64.powf(rec.index as f64 / 2.0);
                assert!(
                    rec.error_angle <= bound * (1.0 + 1e-9),
                    "iteration {} error {} exceeds bound {}",
                    rec.index,
                    rec.error_angle.to_degrees(),
                    bound.to_degrees()
                );
                // the chosen cone narrows by sqrt(3) every iteration
                let expect_half = grid.cone_half_angle / 3f64.powf(rec.index as f64 / 2.0);
                assert!((rec.cone.half_angle - expect_half).abs() < 1e-12 * expect_half);
            }
            // ten iterations gain at least 20 dB over the capture error
            assert!(
                error_decibels(path.error_angle, refined.error_angle) >= 20.0,
                "only {} dB",
                error_decibels(path.error_angle, refined.error_angle)
            );
            assert!(refined.error_angle <= path.error_angle);
            assert!(trace.final_valid);
        }
    }

    #[test]
    fn refinement_preserves_interaction_sequence() {
        let (scene, _, paths) = shoebox_paths(9);
        let coplanar = |f1: usize, f2: usize| {
            let (a, b) = (&scene.faces[f1], &scene.faces[f2]);
            a.normal.dot(b.normal).abs() > 1.0 - 1e-9
                && (b.centroid() - a.centroid()).dot(a.normal).abs() < 1e-9
        };
        let cfg = RefineConfig::default();
        for path in &paths {
            let (refined, _) = refine_path(path, &scene, &cfg);
            // face ids may be re-labeled onto a coplanar partner when
            // the exact point crosses a triangulation seam; the
            // physical surface sequence never changes
            assert_eq!(refined.interactions.len(), path.interactions.len());
            for (a, b) in refined.interactions.iter().zip(&path.interactions) {
                match (&a.kind, &b.kind) {
                    (
                        InteractionKind::Reflection { face: f1 },
                        InteractionKind::Reflection { face: f2 },
                    ) => assert!(f1 == f2 || coplanar(*f1, *f2)),
                    (
                        InteractionKind::Diffraction { wedge: w1, .. },
                        InteractionKind::Diffraction { wedge: w2, .. },
                    ) => assert_eq!(w1, w2),
                    _ => panic!("interaction kind changed"),
                }
            }
        }
    }

    #[test]
    fn lost_sequence_returns_parent_with_lost_path() {
        let (scene, _, paths) = shoebox_paths(9);
        // take a floor bounce and repoint its face at the ceiling: no
        // child axis (pointing down) can hit the ceiling plane forward
        let floor = paths
            .iter()
            .find(|p| {
                p.interactions.len() == 1
                    && p.interactions[0].point.z.abs() < 1e-9
                    && p.launch_direction.z < -0.2
            })
            .expect("floor bounce with a downward launch");
        let ceiling_face = scene
            .faces
            .iter()
            .position(|f| f.corners.iter().all(|c| (c.z - 3.0).abs() < 1e-9))
            .unwrap();
        let mut broken = floor.clone();
        broken.interactions[0].kind = InteractionKind::Reflection { face: ceiling_face };
        let (out, trace) = refine_path(&broken, &scene, &RefineConfig::default());
        assert_eq!(trace.terminated_by, Termination::LostPath);
        assert!(trace.iterations.is_empty());
        assert!((out.error_angle - broken.error_angle).abs() < 1e-15);
        assert_eq!(out.launch_direction.distance(broken.launch_direction), 0.0);
    }

    #[test]
    fn best_error_is_min_over_history() {
        let (scene, _, paths) = shoebox_paths(13);
        let cfg = RefineConfig { max_iterations: 10, angle_tolerance: 0.0, keep_history: false };
        for path in &paths {
            let (refined, trace) = refine_path(path, &scene, &cfg);
            let min_iter = trace
                .iterations
                .iter()
                .map(|r| r.error_angle)
                .fold(path.error_angle, f64::min);
            assert!((refined.error_angle - min_iter).abs() <= f64::EPSILON);
        }
    }

    #[test]
    fn ridge_diffraction_path_refines_by_twenty_db() {
        let scene = make_ridge_scene(
            3.0,
            3.0,
            40.0,
            60.0,
            concrete(),
            Vec3::new(-12.0, 0.5, 1.5),
            Vec3::new(14.0, -0.8, 1.8),
            2.4e9,
        )
        .unwrap();
        let grid = subdivide_equiangular(&build_icosahedron(), 21);
        let cfg = TraceConfig {
            max_reflection_order: 0,
            max_diffraction_order: 1,
            keller_samples: 180,
            ..TraceConfig::default()
        };
        let paths = dedup_paths(shoot(&scene, &grid, &cfg));
        let diff = paths
            .iter()
            .find(|p| matches!(
                p.interactions.first().map(|i| &i.kind),
                Some(InteractionKind::Diffraction { .. })
            ))
            .expect("diffraction path");
        let rc = RefineConfig { max_iterations: 10, angle_tolerance: 0.0, keep_history: false };
        let (refined, trace) = refine_path(diff, &scene, &rc);
        assert!(trace.final_valid);
        assert_eq!(sequence_key(&refined.interactions), sequence_key(&diff.interactions));
        let gain = error_decibels(diff.error_angle, refined.error_angle);
        assert!(gain >= 20.0, "diffraction refinement gained only {} dB", gain);
    }

    #[test]
    fn decibel_helper_handles_exact_zero() {
        assert!((error_decibels(1.0, 0.1) - 10.0).abs() < 1e-12);
        assert!(error_decibels(0.5, 0.0).is_infinite());
        assert!((error_decibels(2.0, 2.0)).abs() < 1e-12);
    }
}
