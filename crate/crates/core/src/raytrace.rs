//! Sequential ray tracing of the beamed-display viewing geometry:
//! virtual-image point source → volume-hologram lens (HOE) → pupil → thin
//! eye lens → retina.
//!
//! World frame: right-handed, meters. The HOE center sits at the origin, the
//! eye looks along `+z` from `z < 0`, and the virtual image floats at
//! `z > 0` panned toward `+x`.
//!
//! The HOE is recorded as an off-axis lens: at every point `p` of the
//! element the reference beam is the spherical wave diverging from the
//! focal point `F` (the ray `F → p`) and the signal beam is a plane wave
//! leaving along the element normal toward the eye. Rays from `F` are
//! therefore Bragg-matched everywhere and leave collimated.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Rotation3, Translation3, UnitQuaternion, Vector3};
use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{KogelnikError, RaytraceError};
use crate::kogelnik::{self, Material};

pub type Vec3 = Vector3<f64>;

type Result<T> = std::result::Result<T, RaytraceError>;

const MM: f64 = 1e-3;

fn unit_or_err(name: &'static str, v: &Vec3) -> Result<Vec3> {
    let norm = v.norm();
    if !norm.is_finite() || norm < 1e-12 {
        return Err(RaytraceError::InvalidDirection { name, norm });
    }
    Ok(v / norm)
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(RaytraceError::InvalidParameter {
            name,
            reason: format!("must be finite and > 0, got {v}"),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub weight: f64,
    pub wavelength: f64,
}

impl Ray {
    pub fn new(origin: Vec3, direction: Vec3, weight: f64, wavelength: f64) -> Result<Self> {
        let norm = direction.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-12 {
            return Err(RaytraceError::InvalidDirection {
                name: "direction",
                norm,
            });
        }
        if !(weight >= 0.0) || !weight.is_finite() {
            return Err(RaytraceError::InvalidParameter {
                name: "weight",
                reason: format!("must be finite and >= 0, got {weight}"),
            });
        }
        Ok(Self {
            origin,
            direction,
            weight,
            wavelength,
        })
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }

    /// Parameter where the ray meets the plane through `point` with normal
    /// `normal`, if it does so ahead of the origin.
    pub fn hit_plane(&self, point: &Vec3, normal: &Vec3) -> Option<f64> {
        let denom = self.direction.dot(normal);
        if denom.abs() < 1e-15 {
            return None;
        }
        let t = (point - self.origin).dot(normal) / denom;
        (t > 0.0).then_some(t)
    }
}

/// Orthonormal pair perpendicular to `axis`.
fn basis(axis: &Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let u = axis.cross(&helper).normalize();
    let v = axis.cross(&u);
    (u, v)
}

/// Rays uniformly distributed in solid angle over a cone about
/// `central_dir`. Each carries weight `1/count`.
pub fn emit_rays(
    point: &Vec3,
    central_dir: &Vec3,
    cone_half_angle: f64,
    count: usize,
    wavelength: f64,
    seed: u64,
) -> Result<Vec<Ray>> {
    let axis = unit_or_err("central_dir", central_dir)?;
    if count < 1 {
        return Err(RaytraceError::InvalidParameter {
            name: "count",
            reason: "must be >= 1".into(),
        });
    }
    if !(cone_half_angle > 0.0 && cone_half_angle < PI / 2.0) {
        return Err(RaytraceError::InvalidParameter {
            name: "cone_half_angle",
            reason: format!("must lie in (0, π/2), got {cone_half_angle}"),
        });
    }
    let (u, v) = basis(&axis);
    let one_minus_cos = 1.0 - cone_half_angle.cos();
    let mut rng = crate::seed::rng(seed, 0);
    let weight = 1.0 / count as f64;
    Ok((0..count)
        .map(|_| {
            let cos_t = 1.0 - rng.gen::<f64>() * one_minus_cos;
            let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
            let phi = 2.0 * PI * rng.gen::<f64>();
            let dir = (axis * cos_t + (u * phi.cos() + v * phi.sin()) * sin_t).normalize();
            Ray {
                origin: *point,
                direction: dir,
                weight,
                wavelength,
            }
        })
        .collect())
}

/// Full diffraction cone angle `2·asin(1.22·λ/p)` of a pixel of pitch `p`.
pub fn diffraction_cone_full_angle(wavelength: f64, pitch: f64) -> f64 {
    2.0 * (1.22 * wavelength / pitch).asin()
}

/// Refraction of unit direction `d` through a planar interface with unit
/// normal `m` oriented along the propagation (`d·m > 0`), from index `n1`
/// into index `n2`. `None` on total internal reflection.
pub fn refract(d: &Vec3, m: &Vec3, n1: f64, n2: f64) -> Option<Vec3> {
    let cos_i = d.dot(m);
    let tangential = (d - m * cos_i) * (n1 / n2);
    let t2 = tangential.norm_squared();
    if t2 > 1.0 {
        return None;
    }
    Some(tangential + m * (1.0 - t2).sqrt())
}

/// Volume-hologram lens element.
#[derive(Debug, Clone, PartialEq)]
pub struct HoeElement {
    pub center: Vec3,
    /// Local frame: `x` right, `y` up, `z` toward the virtual-image side.
    pub orientation: UnitQuaternion<f64>,
    pub aperture_radius: f64,
    pub focal_length: f64,
    /// Off-axis angle of the focal point in the local x–z plane (radians).
    pub tilt_pan: f64,
    pub material: Material,
}

impl Default for HoeElement {
    fn default() -> Self {
        Self {
            center: Vec3::zeros(),
            orientation: UnitQuaternion::identity(),
            aperture_radius: 12.7 * MM,
            focal_length: 150.0 * MM,
            tilt_pan: 35f64.to_radians(),
            material: Material::HX120_532,
        }
    }
}

impl HoeElement {
    pub fn validate(&self) -> Result<()> {
        positive("focal_length", self.focal_length)?;
        positive("aperture_radius", self.aperture_radius)?;
        self.material.validate()?;
        Ok(())
    }

    /// Unit normal pointing toward the eye; also the design output direction.
    pub fn eye_normal(&self) -> Vec3 {
        self.orientation * -Vec3::z()
    }

    pub fn focal_point(&self) -> Vec3 {
        let local = Vec3::new(self.tilt_pan.sin(), 0.0, self.tilt_pan.cos());
        self.center + self.orientation * local * self.focal_length
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        Self {
            center: (iso * nalgebra::Point3::from(self.center)).coords,
            orientation: iso.rotation * self.orientation,
            ..self.clone()
        }
    }

    /// Local grating recorded at `point`, with all vectors inside the medium.
    pub fn local_grating(
        &self,
        point: &Vec3,
    ) -> std::result::Result<kogelnik::GratingVectors, KogelnikError> {
        let m = self.eye_normal();
        let reference_air = (point - self.focal_point()).normalize();
        let signal_air = m;
        let n0 = self.material.n0;
        let reference = refract(&reference_air, &m, 1.0, n0)
            .ok_or(KogelnikError::Grazing { c_r: 0.0, c_s: 0.0 })?;
        let signal = refract(&signal_air, &m, 1.0, n0)
            .ok_or(KogelnikError::Grazing { c_r: 0.0, c_s: 0.0 })?;
        kogelnik::record_grating(&reference, &signal, self.material, &m)
    }
}

/// Result of one ray meeting the HOE.
#[derive(Debug, Clone, PartialEq)]
pub enum HoeOutcome {
    /// Parallel to the element, behind it, arriving from the eye side or
    /// outside the aperture.
    Missed,
    /// Reached the element but produced no diffracted ray.
    Rejected(KogelnikError),
    /// First-order diffracted ray; `eta` already folded into its weight.
    Diffracted { ray: Ray, eta: f64 },
}

impl HoeOutcome {
    pub fn ray(&self) -> Option<&Ray> {
        match self {
            HoeOutcome::Diffracted { ray, .. } => Some(ray),
            _ => None,
        }
    }
}

/// Trace a ray through the HOE. Zero-order light is dropped.
pub fn hoe_deflect(hoe: &HoeElement, ray: &Ray) -> HoeOutcome {
    let m = hoe.eye_normal();
    if ray.direction.dot(&m) <= 0.0 {
        return HoeOutcome::Missed;
    }
    let Some(t) = ray.hit_plane(&hoe.center, &m) else {
        return HoeOutcome::Missed;
    };
    let point = ray.at(t);
    if (point - hoe.center).norm() > hoe.aperture_radius {
        return HoeOutcome::Missed;
    }
    let n0 = hoe.material.n0;
    let grating = match hoe.local_grating(&point) {
        Ok(g) => g,
        Err(e) => return HoeOutcome::Rejected(e),
    };
    let Some(inside) = refract(&ray.direction, &m, 1.0, n0) else {
        return HoeOutcome::Rejected(KogelnikError::Grazing { c_r: 0.0, c_s: 0.0 });
    };
    let replayed = match kogelnik::replay(&grating, &inside) {
        Ok(r) => r,
        Err(e) => return HoeOutcome::Rejected(e),
    };
    let eta = replayed.eta.expect("replay sets eta");
    let Some(out) = refract(&replayed.output_direction(), &m, n0, 1.0) else {
        return HoeOutcome::Rejected(KogelnikError::Grazing {
            c_r: replayed.c_r,
            c_s: replayed.c_s,
        });
    };
    HoeOutcome::Diffracted {
        ray: Ray {
            origin: point,
            direction: out.normalize(),
            weight: ray.weight * eta,
            wavelength: ray.wavelength,
        },
        eta,
    }
}

/// Ideal thin lens with the same focal length and deflection as `hoe`: the
/// lens plane is perpendicular to the design input axis `F → center`, and a
/// fixed rotation then turns that axis onto the design output direction.
/// Used to check the recording geometry.
pub fn ideal_lens_deflect(hoe: &HoeElement, ray: &Ray) -> Option<Ray> {
    let axis = (hoe.center - hoe.focal_point()).normalize();
    let t = ray.hit_plane(&hoe.center, &axis)?;
    let point = ray.at(t);
    if (point - hoe.center).norm() > hoe.aperture_radius {
        return None;
    }
    // Paraxial-exact thin lens in direction-tangent form.
    let d = ray.direction;
    let along = d.dot(&axis);
    if along <= 0.0 {
        return None;
    }
    let slope = (d - axis * along) / along;
    let height = point - hoe.center;
    let out_slope = slope - height / hoe.focal_length;
    let lens_out = (axis + out_slope).normalize();
    let turn = Rotation3::rotation_between(&axis, &hoe.eye_normal())?;
    Some(Ray {
        origin: point,
        direction: turn * lens_out,
        weight: ray.weight,
        wavelength: ray.wavelength,
    })
}

/// Retina sampling grid, centered on the optical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetinaGrid {
    pub rows: usize,
    pub cols: usize,
    /// Half width of the square grid (m).
    pub half_extent: f64,
}

impl Default for RetinaGrid {
    fn default() -> Self {
        Self {
            rows: 201,
            cols: 201,
            half_extent: 3.0 * MM,
        }
    }
}

impl RetinaGrid {
    pub fn pixel_pitch(&self) -> f64 {
        2.0 * self.half_extent / self.cols as f64
    }

    /// Pixel containing retinal coordinates `(u, v)` (u right, v up).
    pub fn pixel(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let col = (u + self.half_extent) / (2.0 * self.half_extent) * self.cols as f64;
        let row = (self.half_extent - v) / (2.0 * self.half_extent) * self.rows as f64;
        if !(col >= 0.0 && row >= 0.0) {
            return None;
        }
        let (col, row) = (col.floor() as usize, row.floor() as usize);
        (col < self.cols && row < self.rows).then_some((row, col))
    }
}

/// Reduced schematic eye: pupil stop in the thin-lens plane, retina plane
/// behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct EyeModel {
    pub eyeball_center: Vec3,
    /// Local frame: `z` is the line of sight (out of the eye).
    pub orientation: UnitQuaternion<f64>,
    /// Pupil plane distance in front of the rotation center.
    pub pupil_offset: f64,
    pub pupil_diameter: f64,
    pub lens_focal: f64,
    pub retina_distance: f64,
    pub retina: RetinaGrid,
}

impl Default for EyeModel {
    fn default() -> Self {
        Self {
            eyeball_center: Vec3::new(0.0, 0.0, -30.0 * MM),
            orientation: UnitQuaternion::identity(),
            pupil_offset: 13.0 * MM,
            pupil_diameter: 3.0 * MM,
            lens_focal: 17.0 * MM,
            retina_distance: 17.0 * MM,
            retina: RetinaGrid::default(),
        }
    }
}

/// Result of a ray entering the eye.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EyeOutcome {
    PupilMiss,
    RetinaMiss,
    Hit { row: usize, col: usize },
}

impl EyeModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.pupil_diameter >= 0.0) {
            return Err(RaytraceError::InvalidParameter {
                name: "pupil_diameter",
                reason: format!("must be >= 0, got {}", self.pupil_diameter),
            });
        }
        positive("lens_focal", self.lens_focal)?;
        positive("retina_distance", self.retina_distance)?;
        positive("retina_half_extent", self.retina.half_extent)?;
        if self.retina.rows == 0 || self.retina.cols == 0 {
            return Err(RaytraceError::InvalidParameter {
                name: "retina",
                reason: "grid must be non-empty".into(),
            });
        }
        Ok(())
    }

    pub fn axis(&self) -> Vec3 {
        self.orientation * Vec3::z()
    }

    pub fn pupil_center(&self) -> Vec3 {
        self.eyeball_center + self.axis() * self.pupil_offset
    }

    pub fn transformed(&self, iso: &Isometry3<f64>) -> Self {
        Self {
            eyeball_center: (iso * nalgebra::Point3::from(self.eyeball_center)).coords,
            orientation: iso.rotation * self.orientation,
            ..self.clone()
        }
    }

    /// Pupil culling, thin-lens refraction and retina binning.
    pub fn image(&self, ray: &Ray) -> EyeOutcome {
        let axis = self.axis();
        let pupil = self.pupil_center();
        let along = -ray.direction.dot(&axis);
        if along <= 0.0 {
            return EyeOutcome::PupilMiss;
        }
        let Some(t) = ray.hit_plane(&pupil, &axis) else {
            return EyeOutcome::PupilMiss;
        };
        let at_pupil = ray.at(t);
        if (at_pupil - pupil).norm() >= self.pupil_diameter / 2.0 {
            return EyeOutcome::PupilMiss;
        }
        // Parallel rays meet where the chief ray crosses the focal plane.
        let focus = pupil + ray.direction * (self.lens_focal / along);
        let refracted = (focus - at_pupil).normalize();
        let retina_center = pupil - axis * self.retina_distance;
        let down = -refracted.dot(&axis);
        if down <= 0.0 {
            return EyeOutcome::RetinaMiss;
        }
        let s = (at_pupil - retina_center).dot(&axis) / down;
        let on_retina = at_pupil + refracted * s - retina_center;
        let ex = self.orientation * Vec3::x();
        let ey = self.orientation * Vec3::y();
        match self.retina.pixel(on_retina.dot(&ex), on_retina.dot(&ey)) {
            Some((row, col)) => EyeOutcome::Hit { row, col },
            None => EyeOutcome::RetinaMiss,
        }
    }
}

/// Virtual image of the display: a pixel grid facing the HOE with a subset
/// of lit pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceGrid {
    pub center: Vec3,
    pub pixel_pitch: f64,
    pub image_rows: usize,
    pub image_cols: usize,
    pub lit_points: Vec<(usize, usize)>,
    pub wavelength: f64,
    /// World point every central ray is aimed at.
    pub aim_point: Vec3,
}

impl SourceGrid {
    /// `n × n` lit points spanning an `rows × cols` image corner to corner.
    pub fn point_grid(n: usize, rows: usize, cols: usize) -> Vec<(usize, usize)> {
        let pick = |i: usize, len: usize| {
            if n == 1 {
                (len - 1) / 2
            } else {
                (i * (len - 1) + (n - 1) / 2) / (n - 1)
            }
        };
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (pick(i, rows), pick(j, cols))))
            .collect()
    }

    pub fn standard() -> Self {
        let pan = 35f64.to_radians();
        Self {
            center: Vec3::new(pan.sin(), 0.0, pan.cos()) * 150.0 * MM,
            pixel_pitch: 16.2e-6,
            image_rows: 801,
            image_cols: 801,
            lit_points: Self::point_grid(17, 801, 801),
            wavelength: 532e-9,
            aim_point: Vec3::zeros(),
        }
    }

    pub fn cone_half_angle(&self) -> f64 {
        (1.22 * self.wavelength / self.pixel_pitch).asin()
    }

    pub fn validate(&self) -> Result<()> {
        positive("pixel_pitch", self.pixel_pitch)?;
        positive("wavelength", self.wavelength)?;
        if 1.22 * self.wavelength >= self.pixel_pitch {
            return Err(RaytraceError::InvalidParameter {
                name: "pixel_pitch",
                reason: "diffraction cone exceeds a hemisphere".into(),
            });
        }
        for &(r, c) in &self.lit_points {
            if r >= self.image_rows || c >= self.image_cols {
                return Err(RaytraceError::InvalidParameter {
                    name: "lit_points",
                    reason: format!("({r}, {c}) outside {}x{}", self.image_rows, self.image_cols),
                });
            }
        }
        Ok(())
    }

    /// Image-plane axes: `(right, down)`, both perpendicular to the line from
    /// the image center to the aim point.
    fn axes(&self) -> (Vec3, Vec3) {
        let facing = (self.aim_point - self.center).normalize();
        let right = Vec3::y().cross(&facing).normalize();
        let up = facing.cross(&right);
        (-right, -up)
    }

    pub fn pixel_position(&self, row: usize, col: usize) -> Vec3 {
        let (right, down) = self.axes();
        let dc = col as f64 - (self.image_cols as f64 - 1.0) / 2.0;
        let dr = row as f64 - (self.image_rows as f64 - 1.0) / 2.0;
        self.center + right * (dc * self.pixel_pitch) + down * (dr * self.pixel_pitch)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub hoe: HoeElement,
    pub eye: EyeModel,
    pub source: SourceGrid,
}

impl Default for Scene {
    fn default() -> Self {
        Self {
            hoe: HoeElement::default(),
            eye: EyeModel::default(),
            source: SourceGrid::standard(),
        }
    }
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.hoe.validate()?;
        self.eye.validate()?;
        self.source.validate()
    }

    /// Moves the eye only.
    pub fn with_eye_offset(&self, offset: Vec3) -> Self {
        let iso = Isometry3::from_parts(Translation3::from(offset), UnitQuaternion::identity());
        Self {
            eye: self.eye.transformed(&iso),
            ..self.clone()
        }
    }

    /// Rigid motion of eye and HOE together.
    pub fn with_head_motion(&self, iso: &Isometry3<f64>) -> Self {
        Self {
            hoe: self.hoe.transformed(iso),
            eye: self.eye.transformed(iso),
            source: self.source.clone(),
        }
    }

    /// Head rotation about the eyeball center: pan about `y`, then tilt
    /// about `x` (both radians).
    pub fn with_head_rotation(&self, pan: f64, tilt: f64) -> Self {
        let rotation = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), pan)
            * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), tilt);
        let pivot = self.eye.eyeball_center;
        let iso = Isometry3::from_parts(Translation3::from(pivot), UnitQuaternion::identity())
            * Isometry3::from_parts(Translation3::identity(), rotation)
            * Isometry3::from_parts(Translation3::from(-pivot), UnitQuaternion::identity());
        self.with_head_motion(&iso)
    }

    pub fn with_head_translation(&self, offset: Vec3) -> Self {
        let iso = Isometry3::from_parts(Translation3::from(offset), UnitQuaternion::identity());
        self.with_head_motion(&iso)
    }
}

/// Ray counts and discarded weight per culling stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RenderDiagnostics {
    pub emitted: u64,
    pub emitted_weight: f64,
    pub hoe_missed: u64,
    pub hoe_missed_weight: f64,
    pub hoe_rejected: u64,
    pub hoe_rejected_weight: f64,
    /// Undiffracted share `(1 − η)` of every ray that reached the grating.
    pub zero_order_weight: f64,
    pub pupil_missed: u64,
    pub pupil_missed_weight: f64,
    pub retina_missed: u64,
    pub retina_missed_weight: f64,
    pub hits: u64,
    pub hit_weight: f64,
}

impl RenderDiagnostics {
    fn merge(&mut self, o: &Self) {
        self.emitted += o.emitted;
        self.emitted_weight += o.emitted_weight;
        self.hoe_missed += o.hoe_missed;
        self.hoe_missed_weight += o.hoe_missed_weight;
        self.hoe_rejected += o.hoe_rejected;
        self.hoe_rejected_weight += o.hoe_rejected_weight;
        self.zero_order_weight += o.zero_order_weight;
        self.pupil_missed += o.pupil_missed;
        self.pupil_missed_weight += o.pupil_missed_weight;
        self.retina_missed += o.retina_missed;
        self.retina_missed_weight += o.retina_missed_weight;
        self.hits += o.hits;
        self.hit_weight += o.hit_weight;
    }

    /// `(stage, count, discarded_weight)` rows.
    pub fn rows(&self) -> Vec<(&'static str, u64, f64)> {
        vec![
            ("emitted", self.emitted, 0.0),
            ("hoe_miss", self.hoe_missed, self.hoe_missed_weight),
            ("hoe_rejected", self.hoe_rejected, self.hoe_rejected_weight),
            (
                "zero_order",
                self.emitted - self.hoe_missed - self.hoe_rejected,
                self.zero_order_weight,
            ),
            ("pupil_miss", self.pupil_missed, self.pupil_missed_weight),
            ("retina_miss", self.retina_missed, self.retina_missed_weight),
            ("retina_hit", self.hits, 0.0),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetinalImage {
    pub intensity: Array2<f64>,
    pub hit_count: Array2<u32>,
    pub pixel_pitch: f64,
    pub diagnostics: RenderDiagnostics,
}

impl RetinalImage {
    pub fn total_intensity(&self) -> f64 {
        self.intensity.sum()
    }
}

/// Traces one ray through HOE and eye. Returns the retinal pixel and
/// weight on a hit.
pub fn trace_ray(
    scene: &Scene,
    ray: &Ray,
    diag: &mut RenderDiagnostics,
) -> Option<(usize, usize, f64)> {
    diag.emitted += 1;
    diag.emitted_weight += ray.weight;
    let (out, eta) = match hoe_deflect(&scene.hoe, ray) {
        HoeOutcome::Missed => {
            diag.hoe_missed += 1;
            diag.hoe_missed_weight += ray.weight;
            return None;
        }
        HoeOutcome::Rejected(_) => {
            diag.hoe_rejected += 1;
            diag.hoe_rejected_weight += ray.weight;
            return None;
        }
        HoeOutcome::Diffracted { ray, eta } => (ray, eta),
    };
    diag.zero_order_weight += ray.weight * (1.0 - eta);
    match scene.eye.image(&out) {
        EyeOutcome::PupilMiss => {
            diag.pupil_missed += 1;
            diag.pupil_missed_weight += out.weight;
            None
        }
        EyeOutcome::RetinaMiss => {
            diag.retina_missed += 1;
            diag.retina_missed_weight += out.weight;
            None
        }
        EyeOutcome::Hit { row, col } => {
            diag.hits += 1;
            diag.hit_weight += out.weight;
            Some((row, col, out.weight))
        }
    }
}

/// Renders the lit source points onto the retina. Point `k` uses sub-seed
/// `derive_seed(seed, k)`, and contributions are summed in point order, so
/// the output does not depend on thread count.
pub fn render_retinal_image(
    scene: &Scene,
    rays_per_point: usize,
    seed: u64,
) -> Result<RetinalImage> {
    scene.validate()?;
    if rays_per_point < 1 {
        return Err(RaytraceError::InvalidParameter {
            name: "rays_per_point",
            reason: "must be >= 1".into(),
        });
    }
    let cone = scene.source.cone_half_angle();
    let per_point = scene
        .source
        .lit_points
        .par_iter()
        .enumerate()
        .map(|(k, &(row, col))| {
            let origin = scene.source.pixel_position(row, col);
            let central = scene.source.aim_point - origin;
            let rays = emit_rays(
                &origin,
                &central,
                cone,
                rays_per_point,
                scene.source.wavelength,
                crate::seed::derive_seed(seed, k as u64),
            )?;
            let mut diag = RenderDiagnostics::default();
            let hits: Vec<_> = rays
                .iter()
                .filter_map(|ray| trace_ray(scene, ray, &mut diag))
                .collect();
            Ok((hits, diag))
        })
        .collect::<Result<Vec<_>>>()?;

    let grid = scene.eye.retina;
    let mut intensity = Array2::zeros((grid.rows, grid.cols));
    let mut hit_count = Array2::zeros((grid.rows, grid.cols));
    let mut diagnostics = RenderDiagnostics::default();
    for (hits, diag) in &per_point {
        for &(r, c, w) in hits {
            intensity[(r, c)] += w;
            hit_count[(r, c)] += 1;
        }
        diagnostics.merge(diag);
    }
    Ok(RetinalImage {
        intensity,
        hit_count,
        pixel_pitch: grid.pixel_pitch(),
        diagnostics,
    })
}
