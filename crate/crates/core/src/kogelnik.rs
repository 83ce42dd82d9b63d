//! Volume-grating physics: grating recording, k-vector closure (KVCM) replay
//! and Kogelnik coupled-wave diffraction efficiency for transmission
//! gratings.
//!
//! All wave vectors live inside the recording medium. Refraction at the air
//! boundary is the caller's job (see [`crate::raytrace`]).

use std::f64::consts::PI;

use nalgebra::Vector3;
use ndarray::Array2;
use rayon::prelude::*;

use crate::error::KogelnikError;

type Result<T> = std::result::Result<T, KogelnikError>;

pub type Vec3 = Vector3<f64>;

const UNIT_TOLERANCE: f64 = 1e-9;
const ETA_OVERSHOOT: f64 = 1e-12;

fn check_unit(name: &'static str, v: &Vec3) -> Result<()> {
    let norm = v.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(KogelnikError::InvalidDirection { name, norm });
    }
    Ok(())
}

/// Photopolymer parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    /// Vacuum wavelength (m).
    pub wavelength: f64,
    /// Average refractive index.
    pub n0: f64,
    /// Refractive index modulation.
    pub n1: f64,
    /// Grating thickness (m).
    pub thickness: f64,
}

impl Material {
    /// Covestro HX120-like film at 532 nm.
    pub const HX120_532: Material = Material {
        wavelength: 532e-9,
        n0: 1.5,
        n1: 0.04,
        thickness: 30e-6,
    };

    pub fn beta(&self) -> f64 {
        2.0 * PI * self.n0 / self.wavelength
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(KogelnikError::InvalidParameter {
                    name,
                    reason: format!("must be finite and > 0, got {v}"),
                })
            }
        };
        positive("wavelength", self.wavelength)?;
        positive("n0", self.n0)?;
        positive("n1", self.n1)?;
        positive("thickness", self.thickness)?;
        if self.n1 >= self.n0 {
            return Err(KogelnikError::InvalidParameter {
                name: "n1",
                reason: format!("modulation {} must be below n0 = {}", self.n1, self.n0),
            });
        }
        Ok(())
    }
}

impl Default for Material {
    fn default() -> Self {
        Self::HX120_532
    }
}

/// A recorded grating: the two recording wave vectors and the grating vector
/// joining them.
#[derive(Debug, Clone, PartialEq)]
pub struct GratingVectors {
    pub n_r: Vec3,
    pub n_s: Vec3,
    pub k: Vec3,
    pub beta: f64,
    pub material: Material,
    pub surface_normal: Vec3,
}

impl GratingVectors {
    /// `k = 0`: both recording beams were parallel.
    pub fn is_degenerate(&self) -> bool {
        self.k.norm() <= 1e-12 * self.beta
    }
}

pub fn record_grating(
    dir_r: &Vec3,
    dir_s: &Vec3,
    material: Material,
    surface_normal: &Vec3,
) -> Result<GratingVectors> {
    check_unit("dir_r", dir_r)?;
    check_unit("dir_s", dir_s)?;
    check_unit("surface_normal", surface_normal)?;
    material.validate()?;
    let beta = material.beta();
    let n_r = dir_r * beta;
    let n_s = dir_s * beta;
    Ok(GratingVectors {
        n_r,
        n_s,
        k: n_s - n_r,
        beta,
        material,
        surface_normal: *surface_normal,
    })
}

/// Output of a replay. `eta` is filled by [`replay`] or
/// [`DiffractionResult::with_efficiency`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiffractionResult {
    pub n_in: Vec3,
    /// Uncorrected prediction `n_in + k`.
    pub n_out_naive: Vec3,
    pub n_out: Vec3,
    pub delta_q: Vec3,
    pub c_r: f64,
    pub c_s: f64,
    pub nu: f64,
    pub xi: f64,
    pub eta: Option<f64>,
}

impl DiffractionResult {
    pub fn with_efficiency(mut self, g: &GratingVectors) -> Result<Self> {
        self.eta = Some(diffraction_efficiency(g, &self)?);
        Ok(self)
    }

    pub fn output_direction(&self) -> Vec3 {
        self.n_out.normalize()
    }
}

/// Smaller-magnitude root of `s² + 2bs + c = 0`, or `None` when the
/// discriminant is negative.
fn closure_root(b: f64, c: f64) -> std::result::Result<f64, f64> {
    let disc = b * b - c;
    if disc < 0.0 {
        return Err(disc);
    }
    let q = b + b.signum() * disc.sqrt();
    Ok(if q == 0.0 { 0.0 } else { -c / q })
}

/// k-vector closure replay: `n_out = n_in + k + Δq` with `Δq` along the
/// surface normal, sized so that `|n_out| = β`.
pub fn kvcm_replay(g: &GratingVectors, dir_in: &Vec3) -> Result<DiffractionResult> {
    check_unit("dir_in", dir_in)?;
    let beta = g.beta;
    let normal = g.surface_normal;
    let n_in = dir_in * beta;
    let naive = n_in + g.k;

    let b = naive.dot(&normal);
    let c = naive.norm_squared() - beta * beta;
    // Rounding noise in |n_in + k|² at exact Bragg match.
    let s = if c.abs() <= 8.0 * f64::EPSILON * beta * beta {
        0.0
    } else {
        closure_root(b, c).map_err(|discriminant| KogelnikError::OffShell {
            discriminant: discriminant / (beta * beta),
        })?
    };
    let delta_q = normal * s;
    let n_out = naive + delta_q;

    let q = normal * beta;
    let c_r = n_in.dot(&q) / (beta * beta);
    let c_s = n_out.dot(&q) / (beta * beta);
    if c_s <= 0.0 || c_r <= 0.0 {
        return Err(KogelnikError::Grazing { c_r, c_s });
    }
    let m = &g.material;
    let nu = PI * m.n1 * m.thickness / (m.wavelength * (c_r * c_s).sqrt());
    let xi = delta_q.norm() * m.thickness / (2.0 * c_s);

    Ok(DiffractionResult {
        n_in,
        n_out_naive: naive,
        n_out,
        delta_q,
        c_r,
        c_s,
        nu,
        xi,
        eta: None,
    })
}

/// `sin(x)/x` with a series fallback near zero.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Coupled-wave efficiency `[ν·sinc(√(ν²+ξ²))]²` for given `ν` and `ξ`.
pub fn coupled_wave_efficiency(nu: f64, xi: f64) -> Result<f64> {
    let s = (nu * nu + xi * xi).sqrt();
    let eta = (nu * sinc(s)).powi(2);
    if !eta.is_finite() || !(0.0..=1.0 + ETA_OVERSHOOT).contains(&eta) {
        return Err(KogelnikError::NumericalInconsistency { eta });
    }
    Ok(eta.min(1.0))
}

pub fn diffraction_efficiency(g: &GratingVectors, r: &DiffractionResult) -> Result<f64> {
    if r.c_r <= 0.0 || r.c_s <= 0.0 {
        return Err(KogelnikError::Grazing {
            c_r: r.c_r,
            c_s: r.c_s,
        });
    }
    let m = &g.material;
    let nu = PI * m.n1 * m.thickness / (m.wavelength * (r.c_r * r.c_s).sqrt());
    coupled_wave_efficiency(nu, r.xi)
}

/// Replay plus efficiency in one call.
pub fn replay(g: &GratingVectors, dir_in: &Vec3) -> Result<DiffractionResult> {
    kvcm_replay(g, dir_in)?.with_efficiency(g)
}

/// Unslanted, Bragg-matched efficiency `sin²(π·d·n1 / (λ·cosθ))`.
pub fn efficiency_special_case(
    theta: f64,
    wavelength: f64,
    n1: f64,
    thickness: f64,
) -> Result<f64> {
    let cos_theta = theta.cos();
    if cos_theta <= 0.0 {
        return Err(KogelnikError::InvalidAngle { cos_theta });
    }
    Ok((PI * thickness * n1 / (wavelength * cos_theta))
        .sin()
        .powi(2))
}

/// In-medium angle for an air incidence angle (radians), by Snell's law.
pub fn air_to_medium_angle(theta_air: f64, n0: f64) -> f64 {
    (theta_air.sin() / n0).asin()
}

/// Symmetric transmission recording direction pair in the x–z plane:
/// reference from `+x`, signal from `-x`, both travelling toward `+z`.
pub fn transmission_pair(theta_r: f64, theta_s: f64) -> (Vec3, Vec3) {
    (
        Vec3::new(theta_r.sin(), 0.0, theta_r.cos()),
        Vec3::new(-theta_s.sin(), 0.0, theta_s.cos()),
    )
}

/// Efficiency over a grid of recording angle pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyMap {
    /// Angle axis in degrees, shared by both indices.
    pub angles_deg: Vec<f64>,
    /// `eta[[i, j]]` for `θ_r = angles[i]`, `θ_s = angles[j]`.
    pub eta: Array2<f64>,
}

impl EfficiencyMap {
    /// Largest entry and its `(θ_r, θ_s)` in degrees.
    pub fn argmax(&self) -> (f64, f64, f64) {
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for ((i, j), &v) in self.eta.indexed_iter() {
            if v > best.0 {
                best = (v, self.angles_deg[i], self.angles_deg[j]);
            }
        }
        best
    }

    pub fn index_of(&self, angle_deg: f64) -> Option<usize> {
        self.angles_deg
            .iter()
            .position(|&a| (a - angle_deg).abs() < 1e-9)
    }
}

fn angle_axis(theta_min: f64, theta_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(theta_min < theta_max) || !(step > 0.0) || !step.is_finite() {
        return Err(KogelnikError::InvalidParameter {
            name: "angle range",
            reason: format!(
                "need min < max and step > 0, got {theta_min}..{theta_max} step {step}"
            ),
        });
    }
    let n = ((theta_max - theta_min) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| theta_min + i as f64 * step).collect())
}

/// Map of Bragg-matched efficiency over recording angle pairs (in-medium,
/// degrees, endpoints inclusive). Each cell records a transmission grating
/// with surface normal `+z` and replays it with its own reference beam.
pub fn efficiency_map(
    theta_min_deg: f64,
    theta_max_deg: f64,
    step_deg: f64,
    material: Material,
) -> Result<EfficiencyMap> {
    detuned_efficiency_map(theta_min_deg, theta_max_deg, step_deg, 0.0, material)
}

/// Off-Bragg variant of [`efficiency_map`]: every cell is replayed with the
/// reference direction rotated by `detuning_deg` in the x–z plane.
pub fn detuned_efficiency_map(
    theta_min_deg: f64,
    theta_max_deg: f64,
    step_deg: f64,
    detuning_deg: f64,
    material: Material,
) -> Result<EfficiencyMap> {
    let angles = angle_axis(theta_min_deg, theta_max_deg, step_deg)?;
    let normal = Vec3::z();
    let n = angles.len();
    let rows: Vec<Vec<f64>> = angles
        .par_iter()
        .map(|&theta_r| {
            angles
                .iter()
                .map(|&theta_s| {
                    let (dir_r, dir_s) =
                        transmission_pair(theta_r.to_radians(), theta_s.to_radians());
                    let g = record_grating(&dir_r, &dir_s, material, &normal)?;
                    let replay_angle = (theta_r + detuning_deg).to_radians();
                    let dir_in = Vec3::new(replay_angle.sin(), 0.0, replay_angle.cos());
                    Ok(replay(&g, &dir_in)?.eta.unwrap_or(0.0))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let eta = Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]);
    Ok(EfficiencyMap {
        angles_deg: angles,
        eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn material() -> Material {
        Material::HX120_532
    }

    fn rotate_y(v: &Vec3, angle: f64) -> Vec3 {
        let (s, c) = angle.sin_cos();
        Vec3::new(c * v.x + s * v.z, v.y, -s * v.x + c * v.z)
    }

    #[test]
    fn degenerate_grating_is_allowed() {
        let d = Vec3::z();
        let g = record_grating(&d, &d, material(), &Vec3::z()).unwrap();
        assert!(g.is_degenerate());
        assert_eq!(g.k, Vec3::zeros());
        let r = kvcm_replay(&g, &Vec3::new(0.3f64.sin(), 0.0, 0.3f64.cos())).unwrap();
        assert_eq!(r.n_out, r.n_in);
        assert_eq!(r.delta_q, Vec3::zeros());
    }

    #[test]
    fn symmetric_transmission_grating_vector() {
        let a = 25f64.to_radians();
        let (dir_r, dir_s) = transmission_pair(a, a);
        let g = record_grating(&dir_r, &dir_s, material(), &Vec3::z()).unwrap();
        let beta = material().beta();
        let expected = Vec3::new(-2.0 * beta * a.sin(), 0.0, 0.0);
        assert!((g.k - expected).norm() <= 1e-9 * beta);
        assert!(g.k.z.abs() <= 1e-9 * beta);
    }

    #[test]
    fn mirror_flip_negates_y_only() {
        let dir_r = Vec3::new(0.3, 0.4, 0.75f64.sqrt());
        let dir_s = Vec3::new(-0.2, -0.1, (1.0f64 - 0.05).sqrt());
        let flip = |v: &Vec3| Vec3::new(v.x, -v.y, v.z);
        let g = record_grating(&dir_r, &dir_s, material(), &Vec3::z()).unwrap();
        let h = record_grating(&flip(&dir_r), &flip(&dir_s), material(), &Vec3::z()).unwrap();
        assert_eq!(h.k.x, g.k.x);
        assert_eq!(h.k.y, -g.k.y);
        assert_eq!(h.k.z, g.k.z);
    }

    #[test]
    fn non_unit_directions_rejected() {
        let bad = Vec3::new(0.0, 0.0, 1.001);
        assert!(matches!(
            record_grating(&bad, &Vec3::z(), material(), &Vec3::z()),
            Err(KogelnikError::InvalidDirection { name: "dir_r", .. })
        ));
        let g = record_grating(&Vec3::z(), &Vec3::z(), material(), &Vec3::z()).unwrap();
        assert!(kvcm_replay(&g, &(Vec3::z() * 2.0)).is_err());
        let mut m = material();
        m.n1 = 2.0;
        assert!(record_grating(&Vec3::z(), &Vec3::z(), m, &Vec3::z()).is_err());
    }

    #[test]
    fn bragg_matched_replay_reproduces_signal() {
        let (dir_r, dir_s) = transmission_pair(20f64.to_radians(), 35f64.to_radians());
        let g = record_grating(&dir_r, &dir_s, material(), &Vec3::z()).unwrap();
        let r = replay(&g, &dir_r).unwrap();
        assert!((r.n_out - g.n_s).norm() <= 1e-12 * g.beta);
        assert_eq!(r.delta_q, Vec3::zeros());
        assert_eq!(r.xi, 0.0);
    }

    #[test]
    fn off_bragg_replay_closes_on_shell() {
        let (dir_r, dir_s) = transmission_pair(20f64.to_radians(), 30f64.to_radians());
        let g = record_grating(&dir_r, &dir_s, material(), &Vec3::z()).unwrap();
        let dir_in = rotate_y(&dir_r, 1f64.to_radians());
        let r = kvcm_replay(&g, &dir_in).unwrap();
        assert_relative_eq!(r.n_out.norm(), g.beta, max_relative = 1e-12);
        assert!(r.delta_q.cross(&Vec3::z()).norm() <= 1e-9 * r.delta_q.norm().max(1.0));

        // Independent root: solve the quadratic with the textbook formula and
        // pick the smaller magnitude.
        let v = dir_in * g.beta + g.k;
        let (b, c) = (2.0 * v.z, v.norm_squared() - g.beta * g.beta);
        let roots = [
            (-b + (b * b - 4.0 * c).sqrt()) / 2.0,
            (-b - (b * b - 4.0 * c).sqrt()) / 2.0,
        ];
        let s = if roots[0].abs() < roots[1].abs() {
            roots[0]
        } else {
            roots[1]
        };
        assert_relative_eq!(r.delta_q.z, s, max_relative = 1e-6);
    }

    #[test]
    fn off_shell_and_grazing_errors() {
        // |k| = 1.73β across x while the normal (y) cannot shorten it.
        let (dir_r, dir_s) = transmission_pair(60f64.to_radians(), 60f64.to_radians());
        let g = record_grating(&dir_r, &dir_s, material(), &Vec3::y()).unwrap();
        assert!(matches!(
            kvcm_replay(&g, &Vec3::z()),
            Err(KogelnikError::OffShell { .. })
        ));

        let g = record_grating(&Vec3::z(), &Vec3::z(), material(), &Vec3::z()).unwrap();
        let backwards = -Vec3::z();
        assert!(matches!(
            kvcm_replay(&g, &backwards),
            Err(KogelnikError::Grazing { .. })
        ));
    }

    #[test]
    fn closure_root_picks_smaller_magnitude() {
        // s² + 2·3·s + 5 = 0 → s = -1 or -5
        assert_relative_eq!(closure_root(3.0, 5.0).unwrap(), -1.0, max_relative = 1e-15);
        assert_relative_eq!(closure_root(-3.0, 5.0).unwrap(), 1.0, max_relative = 1e-15);
        assert!(closure_root(1.0, 2.0).is_err());
        assert_eq!(closure_root(0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn efficiency_at_half_pi_is_one() {
        assert_relative_eq!(
            coupled_wave_efficiency(PI / 2.0, 0.0).unwrap(),
            1.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn efficiency_off_bragg_closed_form() {
        let nu = PI / 2.0;
        let xi = PI;
        let s = (nu * nu + xi * xi).sqrt();
        let expected = (nu * s.sin() / s).powi(2);
        let eta = coupled_wave_efficiency(nu, xi).unwrap();
        assert_relative_eq!(eta, expected, max_relative = 1e-14);
        assert!((eta - 0.0264).abs() < 5e-4, "eta = {eta}");
    }

    #[test]
    fn special_case_examples() {
        let m = material();
        let eta = efficiency_special_case(0.0, m.wavelength, m.n1, m.thickness).unwrap();
        let closed = (PI * 0.04 * 30e-6 / 532e-9).sin().powi(2);
        assert_relative_eq!(eta, closed, max_relative = 1e-14);
        assert!((eta - 0.518).abs() < 1e-3, "eta = {eta}");

        // d·n1 = λ/2
        let half = efficiency_special_case(0.0, 1e-6, 0.05, 10e-6).unwrap();
        assert_relative_eq!(half, 1.0, epsilon = 1e-15);

        // ν = π → full over-coupling (d·n1 = λ at normal incidence)
        let zero = efficiency_special_case(0.0, 1e-6, 0.05, 20e-6).unwrap();
        assert!(zero < 1e-20);
        // default material: ν = 3π at cosθ = d·n1 / (3λ)
        let theta = (m.thickness * m.n1 / m.wavelength / 3.0).acos();
        let zero = efficiency_special_case(theta, m.wavelength, m.n1, m.thickness).unwrap();
        assert!(zero < 1e-20);

        assert!(matches!(
            efficiency_special_case(PI / 2.0 + 0.1, m.wavelength, m.n1, m.thickness),
            Err(KogelnikError::InvalidAngle { .. })
        ));
    }

    #[test]
    fn special_case_matches_full_formula() {
        let m = material();
        for deg in [0.0, 10.0, 25.5, 40.0] {
            let theta = f64::to_radians(deg);
            let (dir_r, dir_s) = transmission_pair(theta, theta);
            let g = record_grating(&dir_r, &dir_s, m, &Vec3::z()).unwrap();
            let full = replay(&g, &dir_r).unwrap().eta.unwrap();
            let special = efficiency_special_case(theta, m.wavelength, m.n1, m.thickness).unwrap();
            assert!(
                (full - special).abs() <= 1e-12,
                "{deg}: {full} vs {special}"
            );
        }
    }

    #[test]
    fn sinc_series_is_continuous() {
        assert_eq!(sinc(0.0), 1.0);
        let x = 1e-6;
        assert!((sinc(x * 0.999) - sinc(x * 1.001)).abs() < 1e-12);
    }

    #[test]
    fn small_map_is_symmetric_and_anchored() {
        let map = efficiency_map(0.0, 30.0, 5.0, material()).unwrap();
        assert_eq!(map.angles_deg.len(), 7);
        let closed = (PI * 0.04 * 30e-6 / 532e-9).sin().powi(2);
        assert!((map.eta[[0, 0]] - closed).abs() <= 1e-12);
        for i in 0..7 {
            for j in 0..7 {
                assert!((map.eta[[i, j]] - map.eta[[j, i]]).abs() <= 1e-12);
            }
        }
        assert!(efficiency_map(10.0, 0.0, 1.0, material()).is_err());
    }

    #[test]
    fn detuned_map_is_dimmer_at_peak() {
        let on = efficiency_map(25.5, 25.5 + 0.5, 0.5, material()).unwrap();
        let off = detuned_efficiency_map(25.5, 25.5 + 0.5, 0.5, 2.0, material()).unwrap();
        assert!(off.eta[[0, 0]] < on.eta[[0, 0]]);
    }

    #[test]
    fn air_angle_conversion() {
        let t = air_to_medium_angle(35f64.to_radians(), 1.5);
        assert_relative_eq!(
            t.sin() * 1.5,
            35f64.to_radians().sin(),
            max_relative = 1e-14
        );
    }

    proptest! {
        #[test]
        fn replay_stays_on_shell_and_bounded(
            tr in 0.0f64..60.0, ts in 0.0f64..60.0, dx in -8.0f64..8.0, dy in -8.0f64..8.0
        ) {
            let (dir_r, dir_s) = transmission_pair(tr.to_radians(), ts.to_radians());
            let g = record_grating(&dir_r, &dir_s, material(), &Vec3::z()).unwrap();
            let tilted = rotate_y(&dir_r, dx.to_radians());
            let (s, c) = dy.to_radians().sin_cos();
            let dir_in = Vec3::new(tilted.x, c * tilted.y - s * tilted.z, s * tilted.y + c * tilted.z);
            if let Ok(r) = replay(&g, &dir_in) {
                prop_assert!((r.n_out.norm() - g.beta).abs() <= 1e-9 * g.beta);
                prop_assert!(r.delta_q.cross(&Vec3::z()).norm() <= 1e-9 * g.beta);
                let eta = r.eta.unwrap();
                prop_assert!((0.0..=1.0).contains(&eta));
            }
        }

        #[test]
        // Only holds on the first coupling lobe; for ν past π the sinc
        // envelope can raise η off-Bragg.
        fn bragg_is_local_max_in_xi(nu in 0.1f64..3.1, delta in 1e-4f64..0.05) {
            let peak = coupled_wave_efficiency(nu, 0.0).unwrap();
            prop_assert!(coupled_wave_efficiency(nu, delta).unwrap() <= peak + 1e-15);
            prop_assert!(coupled_wave_efficiency(nu, -delta).unwrap() <= peak + 1e-15);
        }
    }
}
