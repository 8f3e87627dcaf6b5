//! Per-path link budget and channel summaries.
//!
//! Each geometric path is scored independently: free-space spreading
//! over its unfolded length, a perpendicular-polarization Fresnel
//! coefficient per reflection, and a detour-based attenuation per
//! diffraction. Powers are dBm, delays seconds; the power-delay
//! profile is simply the per-path list sorted by delay.

use num_complex::Complex64;

use crate::geometry::{SpherePoint, Vec3};
use crate::scene::Scene;
use crate::tracer::{Interaction, InteractionKind};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;

/// Channel-facing summary of one path.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PathMetrics {
    /// Angle of departure (direction of the first segment at Tx).
    pub aod: SpherePoint,
    /// Angle of arrival (direction from Rx back along the last segment).
    pub aoa: SpherePoint,
    /// Propagation delay, seconds.
    pub delay: f64,
    pub power_dbm: f64,
    pub reflections: usize,
    pub diffractions: usize,
}

/// Complex relative permittivity eps_r - j sigma / (omega eps_0).
fn complex_permittivity(eps_r: f64, sigma: f64, frequency: f64) -> Complex64 {
    let omega = 2.0 * std::f64::consts::PI * frequency;
    Complex64::new(eps_r, -sigma / (omega * VACUUM_PERMITTIVITY))
}

/// Perpendicular-polarization Fresnel reflection coefficient for a ray
/// arriving from air at incidence angle theta_i off the normal.
pub fn fresnel_perpendicular(cos_theta_i: f64, eps_c: Complex64) -> Complex64 {
    let sin2 = 1.0 - cos_theta_i * cos_theta_i;
    let root = (eps_c - sin2).sqrt();
    (root * -1.0 + cos_theta_i) / (root + cos_theta_i)
}

/// Diffraction amplitude coefficient 1 / (1 + detour / lambda): unity
/// at grazing (zero detour), decaying smoothly as the bend deepens.
pub fn diffraction_coefficient(detour: f64, wavelength: f64) -> f64 {
    1.0 / (1.0 + detour.max(0.0) / wavelength)
}

/// Received power of one path in dBm: transmit power, free-space
/// spreading over the full polyline length, Fresnel loss per
/// reflection, detour loss per diffraction.
pub fn path_power(
    scene: &Scene,
    interactions: &[Interaction],
    total_length: f64,
    tx_power_dbm: f64,
) -> f64 {
    let wavelength = SPEED_OF_LIGHT / scene.frequency;
    let mut power = tx_power_dbm
        + 20.0 * (wavelength / (4.0 * std::f64::consts::PI * total_length)).log10();

    let mut points = vec![scene.tx];
    points.extend(interactions.iter().map(|i| i.point));
    points.push(scene.rx);

    for (k, interaction) in interactions.iter().enumerate() {
        let prev = points[k];
        let here = points[k + 1];
        let next = points[k + 2];
        match interaction.kind {
            InteractionKind::Reflection { face } => {
                let f = &scene.faces[face];
                let m = scene.material_of(face);
                let incident = (here - prev).normalized();
                let cos_theta = incident.dot(f.normal).abs();
                let eps_c = complex_permittivity(m.eps_r, m.sigma, scene.frequency);
                let gamma = fresnel_perpendicular(cos_theta, eps_c);
                power += 20.0 * gamma.norm().log10();
            }
            InteractionKind::Diffraction { .. } => {
                let detour = prev.distance(here) + here.distance(next) - prev.distance(next);
                power += 20.0 * diffraction_coefficient(detour, wavelength).log10();
            }
        }
    }
    power
}

/// Angle of departure and angle of arrival for a path. The arrival
/// direction points into Rx; AOA reverses it so both angles describe
/// rays leaving their terminal.
pub fn angles(launch_direction: Vec3, arrival_direction: Vec3) -> (SpherePoint, SpherePoint) {
    (
        launch_direction.to_sphere_point(),
        (arrival_direction * -1.0).to_sphere_point(),
    )
}

/// Full metrics for one path.
pub fn path_metrics(
    scene: &Scene,
    interactions: &[Interaction],
    launch_direction: Vec3,
    arrival_direction: Vec3,
    total_length: f64,
    tx_power_dbm: f64,
) -> PathMetrics {
    let (aod, aoa) = angles(launch_direction, arrival_direction);
    let reflections = interactions
        .iter()
        .filter(|i| matches!(i.kind, InteractionKind::Reflection { .. }))
        .count();
    PathMetrics {
        aod,
        aoa,
        delay: total_length / SPEED_OF_LIGHT,
        power_dbm: path_power(scene, interactions, total_length, tx_power_dbm),
        reflections,
        diffractions: interactions.len() - reflections,
    }
}

/// Power-delay profile: (delay seconds, power dBm), ascending delay.
pub fn pdp(paths: &[PathMetrics]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = paths.iter().map(|p| (p.delay, p.power_dbm)).collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    out
}

/// RMS delay spread of a profile, with powers converted from dBm to
/// linear weights.
pub fn rms_delay_spread(profile: &[(f64, f64)]) -> f64 {
    if profile.is_empty() {
        return 0.0;
    }
    let weights: Vec<f64> = profile.iter().map(|&(_, p)| 10f64.powf(p / 10.0)).collect();
    let total: f64 = weights.iter().sum();
    let mean: f64 =
        profile.iter().zip(&weights).map(|(&(d, _), w)| d * w).sum::<f64>() / total;
    let var: f64 = profile
        .iter()
        .zip(&weights)
        .map(|(&(d, _), w)| (d - mean) * (d - mean) * w)
        .sum::<f64>()
        / total;
    var.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_method::im_reflections;
    use crate::scene::{make_shoebox, Material};

    fn pec() -> Material {
        Material { name: "pec".into(), eps_r: 1.0, sigma: 1e12 }
    }

    #[test]
    fn one_meter_los_at_wifi_frequency() {
        let scene = Scene::empty(Vec3::ZERO, Vec3::X, 2.4e9);
        let p = path_power(&scene, &[], 1.0, 0.0);
        // free space over 1 m: minus 20 log10(4 pi / lambda)
        let lambda = SPEED_OF_LIGHT / 2.4e9;
        let expect = -20.0 * (4.0 * std::f64::consts::PI / lambda).log10();
        assert!((p - expect).abs() < 1e-12);
        assert!((p + 40.05).abs() < 0.01, "got {} dBm", p);
    }

    #[test]
    fn normal_incidence_on_lossless_dielectric() {
        // eps_r = 4: reflection coefficient (1-2)/(1+2) = -1/3
        let g = fresnel_perpendicular(1.0, Complex64::new(4.0, 0.0));
        assert!((g.re + 1.0 / 3.0).abs() < 1e-12);
        assert!(g.im.abs() < 1e-12);
    }

    #[test]
    fn grazing_incidence_reflects_fully() {
        let g = fresnel_perpendicular(1e-9, Complex64::new(5.31, -1.0));
        assert!((g.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn reflection_magnitude_never_exceeds_unity() {
        for k in 0..100 {
            let cos = (k as f64 + 0.5) / 100.0;
            let g = fresnel_perpendicular(cos, Complex64::new(5.31, -0.93));
            assert!(g.norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn pec_bounce_equals_free_space_at_unfolded_length() {
        let scene = make_shoebox(
            Vec3::new(5.0, 4.0, 3.0),
            pec(),
            Vec3::new(1.0, 1.1, 1.5),
            Vec3::new(4.0, 2.9, 1.3),
            2.4e9,
        )
        .unwrap();
        let paths = im_reflections(&scene, 1);
        let bounce = paths.iter().find(|p| p.interactions.len() == 1).unwrap();
        let reflected = path_power(&scene, &bounce.interactions, bounce.total_length, 0.0);
        let free = path_power(&scene, &[], bounce.total_length, 0.0);
        assert!(
            (reflected - free).abs() < 1e-3,
            "PEC bounce {} vs free space {}",
            reflected,
            free
        );
    }

    #[test]
    fn lossy_wall_attenuates() {
        let scene = make_shoebox(
            Vec3::new(5.0, 4.0, 3.0),
            Material { name: "concrete".into(), eps_r: 5.31, sigma: 0.139 },
            Vec3::new(1.0, 1.1, 1.5),
            Vec3::new(4.0, 2.9, 1.3),
            2.4e9,
        )
        .unwrap();
        let paths = im_reflections(&scene, 1);
        let bounce = paths.iter().find(|p| p.interactions.len() == 1).unwrap();
        let reflected = path_power(&scene, &bounce.interactions, bounce.total_length, 0.0);
        let free = path_power(&scene, &[], bounce.total_length, 0.0);
        assert!(reflected < free - 0.5, "expected visible reflection loss");
    }

    #[test]
    fn power_decreases_with_length() {
        let scene = Scene::empty(Vec3::ZERO, Vec3::X, 2.4e9);
        let mut last = f64::INFINITY;
        for d in [1.0, 2.0, 5.0, 17.0, 60.0] {
            let p = path_power(&scene, &[], d, 0.0);
            assert!(p < last);
            last = p;
        }
        // doubling distance costs 6.02 dB
        let p1 = path_power(&scene, &[], 1.0, 0.0);
        let p2 = path_power(&scene, &[], 2.0, 0.0);
        assert!((p1 - p2 - 20.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn reciprocity_swaps_departure_and_arrival() {
        let tx = Vec3::new(0.3, -1.2, 0.8);
        let rx = Vec3::new(4.0, 2.0, 1.7);
        let d = (rx - tx).normalized();
        let (aod_f, aoa_f) = angles(d, d);
        let (aod_b, aoa_b) = angles(d * -1.0, d * -1.0);
        assert!((aod_f.azimuth - aoa_b.azimuth).abs() < 1e-15);
        assert!((aod_f.pitch - aoa_b.pitch).abs() < 1e-15);
        assert!((aoa_f.azimuth - aod_b.azimuth).abs() < 1e-15);
        assert!((aoa_f.pitch - aod_b.pitch).abs() < 1e-15);
    }

    #[test]
    fn diffraction_coefficient_is_unity_at_grazing_and_decays() {
        let lambda = SPEED_OF_LIGHT / 2.4e9;
        assert!((diffraction_coefficient(0.0, lambda) - 1.0).abs() < 1e-15);
        let mut last = 1.0;
        for detour in [0.001, 0.01, 0.1, 1.0] {
            let d = diffraction_coefficient(detour, lambda);
            assert!(d < last && d > 0.0);
            last = d;
        }
        // one-wavelength detour halves the amplitude
        assert!((diffraction_coefficient(lambda, lambda) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pdp_is_sorted_by_delay() {
        let scene = Scene::empty(Vec3::ZERO, Vec3::new(3.0, 0.0, 0.0), 2.4e9);
        let mk = |len: f64| {
            path_metrics(&scene, &[], Vec3::X, Vec3::X, len, 0.0)
        };
        let metrics = vec![mk(9.0), mk(3.0), mk(6.0)];
        let profile = pdp(&metrics);
        assert_eq!(profile.len(), 3);
        assert!(profile.windows(2).all(|w| w[0].0 <= w[1].0));
        assert!((profile[0].0 - 3.0 / SPEED_OF_LIGHT).abs() < 1e-18);
        // 3 m of travel is very nearly 10 ns
        assert!((profile[0].0 * 1e9 - 10.0069).abs() < 1e-3);
        assert!(pdp(&[]).is_empty());
    }

    #[test]
    fn delay_spread_of_single_path_is_zero() {
        assert!(rms_delay_spread(&[(1e-8, -40.0)]).abs() < 1e-15);
        assert_eq!(rms_delay_spread(&[]), 0.0);
        // two equal-power paths 10 ns apart: spread is 5 ns
        let s = rms_delay_spread(&[(0.0, -50.0), (1e-8, -50.0)]);
        assert!((s - 5e-9).abs() < 1e-15);
    }
}
