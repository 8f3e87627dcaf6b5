//! Floating-point geometry kernel: vectors, rays, cones, triangle
//! intersection, specular reflection and the angular metrics everything
//! downstream is built on.
//!
//! All angles are radians and all lengths are meters. Angular quantities
//! are computed with `atan2` formulations; the refinement loop drives
//! errors far below where `acos` keeps precision.

use std::ops::{Add, Div, Mul, Neg, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Self-intersection offset when re-launching a ray from a hit point, in
/// meters. Intersections closer than this along the ray are ignored.
pub const EPS_HIT: f64 = 1e-6;

/// A point or direction in 3-space, f64 throughout. Serializes as the
/// JSON array `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Serialize for Vec3 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        [self.x, self.y, self.z].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vec3 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Vec3, D::Error> {
        let [x, y, z] = <[f64; 3]>::deserialize(d)?;
        Ok(Vec3 { x, y, z })
    }
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * o.z - self.z * o.y,
            y: self.z * o.x - self.x * o.z,
            z: self.x * o.y - self.y * o.x,
        }
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Unit vector with the same direction. The result is unit-norm to
    /// within 1e-12; zero-length input is a caller bug and panics in
    /// debug builds.
    pub fn normalized(self) -> Vec3 {
        let n = self.norm();
        debug_assert!(n > 0.0, "normalizing zero vector");
        self / n
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Spherical direction as (azimuth, pitch); inverse of
    /// [`SpherePoint::to_unit`].
    pub fn to_sphere_point(self) -> SpherePoint {
        let d = self.normalized();
        SpherePoint {
            azimuth: d.y.atan2(d.x),
            pitch: d.z.clamp(-1.0, 1.0).asin(),
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Half-line from `origin` along unit `direction`.
#[derive(Debug, Clone, Copy)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3) -> Ray {
        Ray { origin, direction: direction.normalized() }
    }

    pub fn point_at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// A launched ray together with the solid angle it represents.
#[derive(Debug, Clone, Copy)]
pub struct RayCone {
    pub origin: Vec3,
    pub axis: Vec3,
    /// Half-angle of the cone, radians, in (0, pi/2).
    pub half_angle: f64,
}

/// Direction on the unit sphere as azimuth in (-pi, pi] and pitch
/// (elevation) in [-pi/2, pi/2].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    pub azimuth: f64,
    pub pitch: f64,
}

impl SpherePoint {
    pub fn new(azimuth: f64, pitch: f64) -> SpherePoint {
        SpherePoint { azimuth, pitch }
    }

    pub fn to_unit(self) -> Vec3 {
        let (sa, ca) = self.azimuth.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        Vec3::new(cp * ca, cp * sa, sp)
    }
}

/// Ray/triangle intersection (Moller-Trumbore). Returns the ray parameter
/// `t > EPS_HIT` and the barycentric coordinates (u, v) of the hit with
/// respect to (b - a, c - a), or `None` when the ray misses.
pub fn intersect_triangle(ray: &Ray, a: Vec3, b: Vec3, c: Vec3) -> Option<(f64, (f64, f64))> {
    let edge1 = b - a;
    let edge2 = c - a;
    let h = ray.direction.cross(edge2);
    let det = edge1.dot(h);
    if det.abs() < 1e-14 {
        return None; // parallel to the triangle plane
    }
    let inv_det = 1.0 / det;
    let s = ray.origin - a;
    let u = s.dot(h) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(edge1);
    let v = ray.direction.dot(q) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = edge2.dot(q) * inv_det;
    if t > EPS_HIT {
        Some((t, (u, v)))
    } else {
        None
    }
}

/// Whether `p`, already lying in the triangle's plane within `plane_eps`
/// meters, falls inside the triangle with `bary_eps` slack on the
/// barycentric coordinates.
pub fn point_in_triangle(p: Vec3, a: Vec3, b: Vec3, c: Vec3, bary_eps: f64, plane_eps: f64) -> bool {
    let v0 = b - a;
    let v1 = c - a;
    let v2 = p - a;
    let n = v0.cross(v1);
    let n_len = n.norm();
    if n_len < 1e-14 {
        return false;
    }
    if v2.dot(n / n_len).abs() > plane_eps {
        return false;
    }
    let d00 = v0.dot(v0);
    let d01 = v0.dot(v1);
    let d11 = v1.dot(v1);
    let d20 = v2.dot(v0);
    let d21 = v2.dot(v1);
    let denom = d00 * d11 - d01 * d01;
    let u = (d11 * d20 - d01 * d21) / denom;
    let v = (d00 * d21 - d01 * d20) / denom;
    u >= -bary_eps && v >= -bary_eps && u + v <= 1.0 + bary_eps
}

/// Specular reflection of an incident direction about a surface normal:
/// r = d - 2 (d . n) n. Both inputs unit-norm.
pub fn mirror_reflect(incident: Vec3, normal: Vec3) -> Vec3 {
    incident - normal * (2.0 * incident.dot(normal))
}

/// Mirror a point across the plane through `plane_point` with unit
/// `normal`.
pub fn mirror_point(p: Vec3, plane_point: Vec3, normal: Vec3) -> Vec3 {
    p - normal * (2.0 * (p - plane_point).dot(normal))
}

/// Perpendicular distance from `p` to the supporting line of `ray`,
/// together with the signed along-ray coordinate of the foot of the
/// perpendicular (negative when `p` lies behind the origin).
pub fn point_to_ray_distance(p: Vec3, ray: &Ray) -> (f64, f64) {
    let w = p - ray.origin;
    let along = w.dot(ray.direction);
    let perp = w.cross(ray.direction).norm();
    (perp, along)
}

/// Angle between two unit vectors, in [0, pi]. Uses atan2 of the cross
/// and dot products, which stays accurate near 0 and pi where the
/// acos form loses all precision.
pub fn angle_between(u: Vec3, v: Vec3) -> f64 {
    u.cross(v).norm().atan2(u.dot(v))
}

/// Equal-area projection of a sphere direction onto the plane:
/// x = azimuth * cos(pitch), y = pitch. Areas on the unit sphere map
/// 1:1, the whole sphere covering 4 pi.
pub fn equal_area_project(p: SpherePoint) -> (f64, f64) {
    (p.azimuth * p.pitch.cos(), p.pitch)
}

/// Spherical linear interpolation between two unit vectors; `t` in [0, 1]
/// sweeps the great-circle arc at constant angular rate.
pub fn slerp(a: Vec3, b: Vec3, t: f64) -> Vec3 {
    let omega = angle_between(a, b);
    if omega < 1e-12 {
        return ((a * (1.0 - t)) + b * t).normalized();
    }
    let so = omega.sin();
    (a * (((1.0 - t) * omega).sin() / so) + b * ((t * omega).sin() / so)).normalized()
}

/// Deterministic right-handed orthonormal pair (u, w) perpendicular to a
/// unit `axis`. The reference axis is the canonical basis vector with the
/// smallest |component| (ties resolved x before y before z), so the frame
/// is stable and reproducible for any input.
pub fn orthonormal_basis(axis: Vec3) -> (Vec3, Vec3) {
    let ax = axis.x.abs();
    let ay = axis.y.abs();
    let az = axis.z.abs();
    let r = if ax <= ay && ax <= az {
        Vec3::X
    } else if ay <= az {
        Vec3::Y
    } else {
        Vec3::Z
    };
    let u = (r - axis * r.dot(axis)).normalized();
    let w = axis.cross(u);
    (u, w)
}

/// Rotate unit `axis` by `tilt` radians toward the in-plane azimuth
/// `phi` measured in the `orthonormal_basis(axis)` frame.
pub fn tilt_axis(axis: Vec3, tilt: f64, phi: f64) -> Vec3 {
    let (u, w) = orthonormal_basis(axis);
    let radial = u * phi.cos() + w * phi.sin();
    (axis * tilt.cos() + radial * tilt.sin()).normalized()
}

/// Closest points between a ray and a segment: returns (t_ray, s_seg,
/// distance) with `t_ray >= 0` on the ray's supporting half-line and
/// `s_seg` clamped to [0, 1] on the segment.
pub fn ray_segment_closest(ray: &Ray, seg_a: Vec3, seg_b: Vec3) -> (f64, f64, f64) {
    let d1 = ray.direction;
    let seg = seg_b - seg_a;
    let seg_len2 = seg.norm_squared();
    let r = ray.origin - seg_a;
    let a = 1.0; // d1 unit
    let e = seg_len2;
    let f = seg.dot(r);
    let c = d1.dot(r);
    let b = d1.dot(seg);
    let denom = a * e - b * b;
    let (mut t, mut s);
    if denom.abs() > 1e-14 * e.max(1.0) {
        s = (b * c - a * f) / -denom;
        s = s.clamp(0.0, 1.0);
        t = b * s - c;
        if t < 0.0 {
            t = 0.0;
            s = (f / e).clamp(0.0, 1.0);
        }
    } else {
        // near-parallel: pin to segment start
        s = 0.0;
        t = (-c).max(0.0);
    }
    let p_ray = ray.point_at(t);
    let p_seg = seg_a + seg * s;
    (t, s, p_ray.distance(p_seg))
}

/// Closest approach of a ray to an infinite line: returns (t_ray, point
/// on the line). `None` when ray and line are parallel.
pub fn ray_line_closest(ray: &Ray, line_point: Vec3, line_dir: Vec3) -> Option<(f64, Vec3)> {
    let d = ray.direction;
    let e = line_dir.normalized();
    let r = ray.origin - line_point;
    let de = d.dot(e);
    let denom = 1.0 - de * de;
    if denom < 1e-14 {
        return None;
    }
    let dr = d.dot(r);
    let er = e.dot(r);
    let t = (de * er - dr) / denom;
    let s = er + de * t;
    Some((t, line_point + e * s))
}

/// Intersection parameter of a ray with the infinite plane through
/// `point` with unit `normal`; `None` when parallel.
pub fn ray_plane(ray: &Ray, point: Vec3, normal: Vec3) -> Option<f64> {
    let den = ray.direction.dot(normal);
    if den.abs() < 1e-14 {
        return None;
    }
    Some((point - ray.origin).dot(normal) / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_unit(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 1e-3 && n < 1.0 {
                return v / n;
            }
        }
    }

    fn rand_point(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    // Independent hit test: solve the plane equation, then require the
    // point to be on the inner side of all three edge half-spaces.
    fn intersect_oracle(ray: &Ray, a: Vec3, b: Vec3, c: Vec3) -> Option<f64> {
        let n = (b - a).cross(c - a);
        let den = ray.direction.dot(n);
        if den.abs() < 1e-14 {
            return None;
        }
        let t = (a - ray.origin).dot(n) / den;
        if t <= EPS_HIT {
            return None;
        }
        let p = ray.point_at(t);
        for (u, v) in [(a, b), (b, c), (c, a)] {
            let edge_in = (v - u).cross(n);
            if (p - u).dot(edge_in) > 0.0 {
                return None;
            }
        }
        Some(t)
    }

    #[test]
    fn triangle_axis_aligned_hit() {
        let ray = Ray::new(Vec3::ZERO, Vec3::Z);
        let hit = intersect_triangle(
            &ray,
            Vec3::new(-1.0, -1.0, 5.0),
            Vec3::new(1.0, -1.0, 5.0),
            Vec3::new(0.0, 1.0, 5.0),
        )
        .expect("hit");
        assert_relative_eq!(hit.0, 5.0, epsilon = 1e-12);
        let p = ray.point_at(hit.0);
        assert!(p.distance(Vec3::new(0.0, 0.0, 5.0)) < 1e-12);
    }

    #[test]
    fn triangle_offset_miss() {
        let ray = Ray::new(Vec3::ZERO, Vec3::Z);
        assert!(intersect_triangle(
            &ray,
            Vec3::new(2.0, 2.0, 5.0),
            Vec3::new(3.0, 2.0, 5.0),
            Vec3::new(2.0, 3.0, 5.0),
        )
        .is_none());
    }

    #[test]
    fn triangle_agrees_with_half_space_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut hits = 0;
        for _ in 0..1000 {
            let a = rand_point(&mut rng, 3.0);
            let b = rand_point(&mut rng, 3.0);
            let c = rand_point(&mut rng, 3.0);
            if (b - a).cross(c - a).norm() < 1e-6 {
                continue;
            }
            let ray = Ray::new(rand_point(&mut rng, 3.0), rand_unit(&mut rng));
            let got = intersect_triangle(&ray, a, b, c);
            let want = intersect_oracle(&ray, a, b, c);
            match (got, want) {
                (Some((t, _)), Some(t2)) => {
                    assert!((t - t2).abs() < 1e-9, "t mismatch {t} vs {t2}");
                    hits += 1;
                }
                (None, None) => {}
                _ => panic!("hit/miss disagreement: {got:?} vs {want:?}"),
            }
        }
        assert!(hits > 10, "oracle comparison never exercised hits");
    }

    #[test]
    fn reflect_normal_incidence() {
        let r = mirror_reflect(Vec3::new(0.0, 0.0, -1.0), Vec3::Z);
        assert!(r.distance(Vec3::Z) < 1e-15);
    }

    #[test]
    fn reflect_45_degrees() {
        let d = Vec3::new(1.0, 0.0, -1.0).normalized();
        let r = mirror_reflect(d, Vec3::Z);
        assert!(r.distance(Vec3::new(1.0, 0.0, 1.0).normalized()) < 1e-15);
    }

    #[test]
    fn reflect_properties_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            let d = rand_unit(&mut rng);
            let n = rand_unit(&mut rng);
            let r = mirror_reflect(d, n);
            assert!((r.norm() - 1.0).abs() < 1e-12);
            assert!((d.dot(n) + r.dot(n)).abs() < 1e-12);
            // involution across the same normal
            let back = mirror_reflect(r, n);
            assert!(back.distance(d) < 1e-12);
        }
    }

    #[test]
    fn point_ray_distance_cases() {
        let ray = Ray::new(Vec3::ZERO, Vec3::X);
        let (d, _) = point_to_ray_distance(Vec3::new(0.0, 1.0, 0.0), &ray);
        assert_relative_eq!(d, 1.0, epsilon = 1e-14);
        let (d, _) = point_to_ray_distance(Vec3::new(2.0, 0.0, 0.0), &ray);
        assert!(d.abs() < 1e-14);
        let (d, along) = point_to_ray_distance(Vec3::new(3.0, 4.0, 0.0), &ray);
        assert_relative_eq!(d, 4.0, epsilon = 1e-14);
        assert_relative_eq!(along, 3.0, epsilon = 1e-14);
    }

    #[test]
    fn angle_between_extremes() {
        let u = rand_unit(&mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(angle_between(u, u), 0.0);
        assert_relative_eq!(angle_between(u, -u), std::f64::consts::PI, epsilon = 1e-15);
    }

    #[test]
    fn angle_between_small_angles_keep_precision() {
        let u = Vec3::X;
        let v = Vec3::new(1.0, 1e-8, 0.0).normalized();
        let got = angle_between(u, v);
        let want = 1e-8_f64.atan();
        assert!((got - want).abs() / want < 1e-12, "got {got}, want {want}");
        // the acos form would be useless here: 1 - cos(1e-8) underflows
        assert!((1.0 - u.dot(v)) < 1e-15);
    }

    #[test]
    fn angle_between_symmetric_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let a = rand_unit(&mut rng);
            let b = rand_unit(&mut rng);
            let c = rand_unit(&mut rng);
            assert!((angle_between(a, b) - angle_between(b, a)).abs() < 1e-15);
            assert!(angle_between(a, c) <= angle_between(a, b) + angle_between(b, c) + 1e-10);
        }
    }

    #[test]
    fn equal_area_projection_points() {
        let (x, y) = equal_area_project(SpherePoint::new(2.3, std::f64::consts::FRAC_PI_2));
        assert!(x.abs() < 1e-15);
        assert_relative_eq!(y, std::f64::consts::FRAC_PI_2);
        let (x, y) = equal_area_project(SpherePoint::new(1.0, 0.0));
        assert_relative_eq!(x, 1.0);
        assert_eq!(y, 0.0);
    }

    #[test]
    fn equal_area_projection_preserves_total_area() {
        // midpoint rule over pitch: the projected width at pitch p is
        // 2 pi cos(p), so the image area must integrate to 4 pi.
        let n = 1_000_000;
        let dp = std::f64::consts::PI / n as f64;
        let mut area = 0.0;
        for i in 0..n {
            let p = -std::f64::consts::FRAC_PI_2 + (i as f64 + 0.5) * dp;
            let (x_edge, _) = equal_area_project(SpherePoint::new(std::f64::consts::PI, p));
            area += 2.0 * x_edge * dp;
        }
        let want = 4.0 * std::f64::consts::PI;
        assert!((area - want).abs() / want < 1e-3, "area {area} vs {want}");
    }

    #[test]
    fn slerp_equal_angles() {
        let a = Vec3::X;
        let b = Vec3::new(0.2, 0.9, 0.1).normalized();
        let n = 7;
        let pts: Vec<Vec3> = (0..=n).map(|k| slerp(a, b, k as f64 / n as f64)).collect();
        let step = angle_between(a, b) / n as f64;
        for w in pts.windows(2) {
            assert!((angle_between(w[0], w[1]) - step).abs() < 1e-12);
        }
        assert!(pts[0].distance(a) < 1e-15);
        assert!(pts[n].distance(b) < 1e-12);
    }

    #[test]
    fn basis_is_orthonormal_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = rand_unit(&mut rng);
            let (u, w) = orthonormal_basis(a);
            assert!(u.dot(a).abs() < 1e-12);
            assert!(w.dot(a).abs() < 1e-12);
            assert!(u.dot(w).abs() < 1e-12);
            assert!((u.norm() - 1.0).abs() < 1e-12);
            assert!(w.cross(a).is_finite());
            let (u2, w2) = orthonormal_basis(a);
            assert_eq!(u, u2);
            assert_eq!(w, w2);
        }
    }

    #[test]
    fn ray_segment_closest_basic() {
        let ray = Ray::new(Vec3::ZERO, Vec3::X);
        let (t, s, d) = ray_segment_closest(&ray, Vec3::new(2.0, -1.0, 1.0), Vec3::new(2.0, 1.0, 1.0));
        assert_relative_eq!(t, 2.0, epsilon = 1e-12);
        assert_relative_eq!(s, 0.5, epsilon = 1e-12);
        assert_relative_eq!(d, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rigid_transform_invariance_of_intersection() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        // rotation by 2pi/7 about a random axis plus a translation
        let axis = rand_unit(&mut rng);
        let ang: f64 = 2.0 * std::f64::consts::PI / 7.0;
        let rot = |v: Vec3| -> Vec3 {
            // Rodrigues rotation
            v * ang.cos() + axis.cross(v) * ang.sin() + axis * (axis.dot(v) * (1.0 - ang.cos()))
        };
        let shift = Vec3::new(0.4, -2.0, 1.1);
        for _ in 0..200 {
            let a = rand_point(&mut rng, 3.0);
            let b = rand_point(&mut rng, 3.0);
            let c = rand_point(&mut rng, 3.0);
            if (b - a).cross(c - a).norm() < 1e-6 {
                continue;
            }
            let ray = Ray::new(rand_point(&mut rng, 3.0), rand_unit(&mut rng));
            let ray2 = Ray { origin: rot(ray.origin) + shift, direction: rot(ray.direction) };
            let h1 = intersect_triangle(&ray, a, b, c);
            let h2 = intersect_triangle(&ray2, rot(a) + shift, rot(b) + shift, rot(c) + shift);
            match (h1, h2) {
                (Some((t1, _)), Some((t2, _))) => {
                    assert!((t1 - t2).abs() <= 1e-9 * t1.abs().max(1.0))
                }
                (None, None) => {}
                other => panic!("transform changed hit/miss: {other:?}"),
            }
        }
    }
}
