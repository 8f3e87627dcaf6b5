//! Image-method reference solver.
//!
//! Works backward from receiver to transmitter: reflection paths come
//! from chains of mirror images of Tx across face planes, diffraction
//! paths from the length-minimizing point on each wedge edge. The
//! results are exact (no launch grid, no cones), which makes them the
//! yardstick the forward shooter is measured against. Cost grows as
//! faces^order, so reflections are capped at order 3.

use rayon::prelude::*;

use crate::geometry::{self, Ray, Vec3, EPS_HIT};
use crate::scene::Scene;
use crate::tracer::{Interaction, InteractionKind};

/// An exact path from the backward solver. Interactions use the same
/// structure as forward-traced paths so sequence keys are comparable.
#[derive(Debug, Clone)]
pub struct ImagePath {
    pub interactions: Vec<Interaction>,
    /// Unit direction of the first segment (angle of departure).
    pub launch_direction: Vec3,
    /// Unit direction of the last segment, pointing toward Rx.
    pub arrival_direction: Vec3,
    /// Exact polyline length Tx -> points -> Rx, m.
    pub total_length: f64,
}

fn assemble(scene: &Scene, interactions: Vec<Interaction>) -> ImagePath {
    let mut points = vec![scene.tx];
    points.extend(interactions.iter().map(|i| i.point));
    points.push(scene.rx);
    let total_length = points.windows(2).map(|w| w[0].distance(w[1])).sum();
    ImagePath {
        launch_direction: (points[1] - points[0]).normalized(),
        arrival_direction: (points[points.len() - 1] - points[points.len() - 2]).normalized(),
        total_length,
        interactions,
    }
}

/// All unobstructed specular-reflection paths of order 0..=max_order
/// (order 0 is the direct line-of-sight path). Capped at order 3.
pub fn im_reflections(scene: &Scene, max_order: usize) -> Vec<ImagePath> {
    assert!(max_order <= 3, "reflection order is capped at 3");
    let mut out = Vec::new();

    if !scene.occluded(scene.tx, scene.rx) && scene.tx.distance(scene.rx) > EPS_HIT {
        out.push(assemble(scene, Vec::new()));
    }
    if max_order == 0 || scene.faces.is_empty() {
        return out;
    }

    // consecutive mirrors across the same plane cancel; precompute
    // which face pairs are coplanar so those chains are skipped
    let nf = scene.faces.len();
    let coplanar: Vec<bool> = (0..nf * nf)
        .map(|idx| {
            let (i, j) = (idx / nf, idx % nf);
            let (a, b) = (&scene.faces[i], &scene.faces[j]);
            a.normal.dot(b.normal).abs() > 1.0 - 1e-9
                && (b.centroid() - a.centroid()).dot(a.normal).abs() < 1e-9
        })
        .collect();

    let mut by_first: Vec<Vec<ImagePath>> = (0..nf)
        .into_par_iter()
        .map(|first| {
            let mut found = Vec::new();
            let mut chain = vec![first];
            extend_chain(scene, &coplanar, &mut chain, max_order, &mut found);
            found
        })
        .collect();
    for v in by_first.iter_mut() {
        out.append(v);
    }
    out
}

fn extend_chain(
    scene: &Scene,
    coplanar: &[bool],
    chain: &mut Vec<usize>,
    max_order: usize,
    found: &mut Vec<ImagePath>,
) {
    if let Some(path) = solve_chain(scene, chain) {
        found.push(path);
    }
    if chain.len() == max_order {
        return;
    }
    let nf = scene.faces.len();
    let last = *chain.last().unwrap();
    for next in 0..nf {
        if coplanar[last * nf + next] {
            continue;
        }
        chain.push(next);
        extend_chain(scene, coplanar, chain, max_order, found);
        chain.pop();
    }
}

/// Solve one ordered face chain by back-substitution from the mirror
/// images: images[k] is Tx mirrored across the first k planes; walking
/// from Rx toward each image in reverse yields the reflection points.
fn solve_chain(scene: &Scene, chain: &[usize]) -> Option<ImagePath> {
    let mut images = Vec::with_capacity(chain.len() + 1);
    images.push(scene.tx);
    for &f in chain {
        let face = &scene.faces[f];
        images.push(geometry::mirror_point(*images.last().unwrap(), face.plane_point(), face.normal));
    }

    let mut points = vec![Vec3::ZERO; chain.len()];
    let mut after = scene.rx;
    for k in (0..chain.len()).rev() {
        let face = &scene.faces[chain[k]];
        let image = images[k + 1];
        let seg = image - after;
        let len = seg.norm();
        if len <= EPS_HIT {
            return None;
        }
        let dir = seg / len;
        let ray = Ray { origin: after, direction: dir };
        // the reflection point is where segment [after, image] pierces
        // the face, inside its bounds
        let (t, _) = geometry::intersect_triangle(&ray, face.corners[0], face.corners[1], face.corners[2])?;
        if t >= len - EPS_HIT {
            return None;
        }
        points[k] = ray.point_at(t);
        after = points[k];
    }

    // visibility of every segment of the actual polyline
    let mut polyline = vec![scene.tx];
    polyline.extend(points.iter().copied());
    polyline.push(scene.rx);
    for pair in polyline.windows(2) {
        if pair[0].distance(pair[1]) <= EPS_HIT {
            return None;
        }
        if scene.occluded(pair[0], pair[1]) {
            return None;
        }
    }

    let interactions = chain
        .iter()
        .zip(points)
        .map(|(&face, point)| Interaction { kind: InteractionKind::Reflection { face }, point })
        .collect();
    Some(assemble(scene, interactions))
}

/// All unobstructed single-diffraction paths: for each wedge, the point
/// on the edge segment minimizing |Tx p| + |p Rx| (the equal-angle
/// condition on the edge holds there). Minimizers at the edge's
/// endpoints are rejected, as are paths entering through the solid.
pub fn im_single_diffraction(scene: &Scene) -> Vec<ImagePath> {
    let mut out = Vec::new();
    for wedge in &scene.wedges {
        let e0 = wedge.endpoints[0];
        let edge = wedge.endpoints[1] - e0;
        let edge_len = edge.norm();
        let e_hat = edge / edge_len;

        // coordinates along the edge and radial distances off it
        let a_t = (scene.tx - e0).dot(e_hat);
        let a_r = (scene.rx - e0).dot(e_hat);
        let r_t = (scene.tx - e0 - e_hat * a_t).norm();
        let r_r = (scene.rx - e0 - e_hat * a_r).norm();
        if r_t <= EPS_HIT || r_r <= EPS_HIT {
            continue; // endpoint on the edge line, no defined cone
        }
        // unfold both half-planes about the edge: Tx at (a_t, r_t),
        // Rx at (a_r, -r_r); the straight line between them crosses
        // the axis at the length-minimizing point
        let x_star = a_t + r_t * (a_r - a_t) / (r_t + r_r);
        let s = x_star / edge_len;
        if !(1e-9..=1.0 - 1e-9).contains(&s) {
            continue; // minimizer not strictly inside the segment
        }
        let p = e0 + edge * s;

        let to_tx = (scene.tx - p).normalized();
        let to_rx = (scene.rx - p).normalized();
        if !wedge.in_exterior(to_tx) || !wedge.in_exterior(to_rx) {
            continue;
        }
        if scene.occluded(scene.tx, p) || scene.occluded(p, scene.rx) {
            continue;
        }
        let interactions = vec![Interaction {
            kind: InteractionKind::Diffraction { wedge: wedge.id, direction: to_rx },
            point: p,
        }];
        out.push(assemble(scene, interactions));
    }
    out
}
