//! Shooting-and-bouncing-rays engine.
//!
//! Every launch direction carries a cone; the cone's axis ray is walked
//! through the scene, reflecting specularly off faces and spawning
//! diffracted rays on the Keller cone of any wedge edge passing through
//! the cone's widening tube. A candidate path is recorded whenever the
//! receiver lies inside the cone on the current segment. Two cleanup
//! passes follow the shoot: duplicate removal (same interaction
//! sequence, keep the smallest error angle) and collision validation
//! (re-trace the polyline against real face bounds and occlusion).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{
    self, angle_between, orthonormal_basis, point_to_ray_distance, Ray, RayCone, Vec3, EPS_HIT,
};
use crate::launcher::{LaunchGrid, Scheme};
use crate::scene::Scene;

/// One interaction along a path: a specular bounce on a face or a
/// diffraction at a wedge edge. Diffractions remember the direction the
/// diffracted ray left with, so refinement can re-emit nearby rays
/// without re-searching the whole Keller cone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Interaction {
    pub kind: InteractionKind,
    pub point: Vec3,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InteractionKind {
    Reflection { face: usize },
    Diffraction { wedge: usize, direction: Vec3 },
}

impl Interaction {
    pub fn sequence_item(&self) -> (u8, usize) {
        match self.kind {
            InteractionKind::Reflection { face } => (0, face),
            InteractionKind::Diffraction { wedge, .. } => (1, wedge),
        }
    }
}

/// Interaction kind/id list, the identity of a path for deduplication
/// and for matching against reference results.
pub fn sequence_key(interactions: &[Interaction]) -> Vec<(u8, usize)> {
    interactions.iter().map(Interaction::sequence_item).collect()
}

/// A Tx-to-Rx path candidate found by the shooter.
#[derive(Debug, Clone)]
pub struct PropagationPath {
    pub interactions: Vec<Interaction>,
    /// Unit direction of the first segment (angle of departure).
    pub launch_direction: Vec3,
    /// Unit direction of the last segment, pointing toward Rx.
    pub arrival_direction: Vec3,
    /// Polyline length Tx -> points -> foot of the Rx perpendicular, m.
    pub total_length: f64,
    /// Perpendicular distance from Rx to the final segment's line, m.
    pub miss_distance: f64,
    /// Angular miss atan(miss_distance / total_length), radians.
    pub error_angle: f64,
    /// The launch cone that produced the candidate.
    pub cone: RayCone,
    /// Index of the launch direction in its grid (deterministic ties).
    pub grid_index: usize,
}

/// Orders and sampling counts for a shoot.
#[derive(Debug, Clone, Copy)]
pub struct TraceConfig {
    pub max_reflection_order: usize,
    /// 0 or 1; multi-diffraction is out of scope.
    pub max_diffraction_order: usize,
    /// Subdivision count used when the caller builds the grid.
    pub n: usize,
    pub scheme: Scheme,
    /// Diffracted rays sampled per captured wedge.
    pub keller_samples: usize,
}

impl Default for TraceConfig {
    fn default() -> TraceConfig {
        TraceConfig {
            max_reflection_order: 2,
            max_diffraction_order: 0,
            n: 21,
            scheme: Scheme::Equiangular,
            keller_samples: 72,
        }
    }
}

/// Shoot every grid direction through the scene and return all path
/// candidates, in grid order, before deduplication and validation.
pub fn shoot(scene: &Scene, grid: &LaunchGrid, cfg: &TraceConfig) -> Vec<PropagationPath> {
    assert!(cfg.max_diffraction_order <= 1, "diffraction order is capped at 1");
    let half_angle = grid.cone_half_angle;
    let mut per_direction: Vec<Vec<PropagationPath>> = grid
        .directions
        .par_iter()
        .enumerate()
        .map(|(grid_index, &dir)| {
            let mut found = Vec::new();
            let cone = RayCone { origin: scene.tx, axis: dir, half_angle };
            let walk = Walk {
                scene,
                cfg,
                cone,
                grid_index,
                half_angle,
            };
            walk.step(scene.tx, dir, &mut Vec::new(), 0.0, 0, 0, &mut found);
            found
        })
        .collect();
    let mut all = Vec::new();
    for v in per_direction.iter_mut() {
        all.append(v);
    }
    all
}

struct Walk<'a> {
    scene: &'a Scene,
    cfg: &'a TraceConfig,
    cone: RayCone,
    grid_index: usize,
    half_angle: f64,
}

impl Walk<'_> {
    #[allow(clippy::too_many_arguments)]
    fn step(
        &self,
        origin: Vec3,
        direction: Vec3,
        interactions: &mut Vec<Interaction>,
        length_so_far: f64,
        refl: usize,
        diff: usize,
        found: &mut Vec<PropagationPath>,
    ) {
        let ray = Ray { origin, direction };
        let hit = self.scene.first_hit(&ray);
        let segment_end = hit.map_or(f64::INFINITY, |h| h.t);

        // reception: Rx inside the cone on this segment
        let (miss, along) = point_to_ray_distance(self.scene.rx, &ray);
        if along > 0.0 && along < segment_end {
            let total = length_so_far + along;
            let error = miss.atan2(total);
            if error <= self.half_angle {
                found.push(PropagationPath {
                    interactions: interactions.clone(),
                    launch_direction: self.cone.axis,
                    arrival_direction: direction,
                    total_length: total,
                    miss_distance: miss,
                    error_angle: error,
                    cone: self.cone,
                    grid_index: self.grid_index,
                });
            }
        }

        // diffraction: wedge edges passing through the cone's tube
        if diff < self.cfg.max_diffraction_order {
            for wedge in &self.scene.wedges {
                let (t_ray, s_seg, dist) =
                    geometry::ray_segment_closest(&ray, wedge.endpoints[0], wedge.endpoints[1]);
                if t_ray <= EPS_HIT || t_ray >= segment_end {
                    continue;
                }
                if !(1e-9..=1.0 - 1e-9).contains(&s_seg) {
                    continue; // closest approach at an edge endpoint
                }
                let tube_radius = (length_so_far + t_ray) * self.half_angle.tan();
                if dist > tube_radius {
                    continue;
                }
                let p = wedge.endpoints[0] + (wedge.endpoints[1] - wedge.endpoints[0]) * s_seg;
                if p.distance(origin) <= EPS_HIT {
                    continue;
                }
                // the edge point must be illuminated from the air side
                if !wedge.in_exterior((origin - p).normalized()) {
                    continue;
                }
                if self.scene.occluded(origin, p) {
                    continue;
                }
                let incident = (p - origin).normalized();
                let beta = angle_between(incident, wedge.edge_dir);
                if !(1e-9..=std::f64::consts::PI - 1e-9).contains(&beta) {
                    continue; // grazing along the edge
                }
                let (u, w) = orthonormal_basis(wedge.edge_dir);
                let (sb, cb) = beta.sin_cos();
                let seg_len = p.distance(origin);
                for k in 0..self.cfg.keller_samples {
                    let phi =
                        2.0 * std::f64::consts::PI * k as f64 / self.cfg.keller_samples as f64;
                    let out =
                        wedge.edge_dir * cb + (u * phi.cos() + w * phi.sin()) * sb;
                    if !wedge.in_exterior(out) {
                        continue;
                    }
                    interactions.push(Interaction {
                        kind: InteractionKind::Diffraction { wedge: wedge.id, direction: out },
                        point: p,
                    });
                    self.step(
                        p,
                        out,
                        interactions,
                        length_so_far + seg_len,
                        refl,
                        diff + 1,
                        found,
                    );
                    interactions.pop();
                }
            }
        }

        // specular bounce at the nearest face
        if let Some(h) = hit {
            if refl < self.cfg.max_reflection_order {
                let normal = self.scene.faces[h.face].normal;
                let reflected = geometry::mirror_reflect(direction, normal);
                interactions.push(Interaction {
                    kind: InteractionKind::Reflection { face: h.face },
                    point: h.point,
                });
                self.step(
                    h.point,
                    reflected,
                    interactions,
                    length_so_far + h.t,
                    refl + 1,
                    diff,
                    found,
                );
                interactions.pop();
            }
        }
    }
}

/// Keep, per interaction sequence, only the candidate with the smallest
/// error angle (ties to the smaller grid index). Output sorted by
/// sequence for deterministic downstream processing.
pub fn dedup_paths(candidates: Vec<PropagationPath>) -> Vec<PropagationPath> {
    let mut best: std::collections::BTreeMap<Vec<(u8, usize)>, PropagationPath> =
        std::collections::BTreeMap::new();
    for cand in candidates {
        let key = sequence_key(&cand.interactions);
        match best.get(&key) {
            Some(prev)
                if (prev.error_angle, prev.grid_index)
                    <= (cand.error_angle, cand.grid_index) => {}
            _ => {
                best.insert(key, cand);
            }
        }
    }
    best.into_values().collect()
}

/// Re-trace a path's polyline against the real scene: every listed
/// reflection must hit its face inside the triangle bounds, every
/// diffraction point must lie on its wedge's edge segment, and every
/// segment must be unobstructed.
pub fn validate_path(path: &PropagationPath, scene: &Scene) -> bool {
    let mut points = vec![scene.tx];
    points.extend(path.interactions.iter().map(|i| i.point));
    points.push(scene.rx);

    for (idx, interaction) in path.interactions.iter().enumerate() {
        let prev = points[idx];
        let here = points[idx + 1];
        let seg = here - prev;
        let dist = seg.norm();
        if dist <= EPS_HIT {
            return false;
        }
        match interaction.kind {
            InteractionKind::Reflection { face } => {
                if face >= scene.faces.len() {
                    return false;
                }
                let f = &scene.faces[face];
                let ray = Ray::new(prev, seg);
                match geometry::intersect_triangle(&ray, f.corners[0], f.corners[1], f.corners[2])
                {
                    Some((t, _)) if (t - dist).abs() <= 1e-6 => {}
                    _ => return false,
                }
            }
            InteractionKind::Diffraction { wedge, .. } => {
                if wedge >= scene.wedges.len() {
                    return false;
                }
                let w = &scene.wedges[wedge];
                let edge = w.endpoints[1] - w.endpoints[0];
                let s = (here - w.endpoints[0]).dot(edge) / edge.norm_squared();
                if !(-1e-9..=1.0 + 1e-9).contains(&s) {
                    return false;
                }
                let on_edge = w.endpoints[0] + edge * s;
                if on_edge.distance(here) > 1e-6 {
                    return false;
                }
            }
        }
    }
    for pair in points.windows(2) {
        if scene.occluded(pair[0], pair[1]) {
            return false;
        }
    }
    true
}
