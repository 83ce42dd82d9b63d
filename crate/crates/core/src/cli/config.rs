//! JSON experiment configuration.
//!
//! Every physical quantity carries its unit in the key name (`_mm`, `_um`,
//! `_nm`, `_deg`). Unknown keys are rejected; a known key written without
//! its unit suffix gets a dedicated error.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::cgh::OptimizerConfig;
use crate::error::ConfigError;
use crate::kogelnik::Material;
use crate::raytrace::{EyeModel, HoeElement, RetinaGrid, Scene, SourceGrid};
use crate::sweep::{SweepAxis, SweepConfig};

type Result<T> = std::result::Result<T, ConfigError>;

const MM: f64 = 1e-3;
// Micro and nano conversions divide so that e.g. 532 nm becomes exactly
// the literal 532e-9.
const PER_UM: f64 = 1e6;
const PER_NM: f64 = 1e9;

const UNIT_SUFFIXES: [&str; 4] = ["_mm", "_um", "_nm", "_deg"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub optics: OpticsConfig,
    pub kogelnik: KogelnikConfig,
    pub cgh: CghConfig,
    pub sweep: SweepSection,
    pub output: OutputConfig,
}

/// HOE, eye and virtual-image source. The HOE material lives in
/// [`KogelnikConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsConfig {
    pub hoe_focal_length_mm: f64,
    pub hoe_tilt_pan_deg: f64,
    pub hoe_aperture_radius_mm: f64,
    pub eyeball_distance_mm: f64,
    pub pupil_offset_mm: f64,
    pub pupil_diameter_mm: f64,
    pub eye_lens_focal_mm: f64,
    pub retina_distance_mm: f64,
    pub retina_rows: usize,
    pub retina_cols: usize,
    pub retina_half_extent_mm: f64,
    pub source_distance_mm: f64,
    pub source_pan_deg: f64,
    pub source_pixel_pitch_um: f64,
    pub source_rows: usize,
    pub source_cols: usize,
    /// Lit points per side, spread corner to corner.
    pub lit_grid: usize,
    pub rays_per_point: usize,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            hoe_focal_length_mm: 150.0,
            hoe_tilt_pan_deg: 35.0,
            hoe_aperture_radius_mm: 12.7,
            eyeball_distance_mm: 30.0,
            pupil_offset_mm: 13.0,
            pupil_diameter_mm: 3.0,
            eye_lens_focal_mm: 17.0,
            retina_distance_mm: 17.0,
            retina_rows: 201,
            retina_cols: 201,
            retina_half_extent_mm: 3.0,
            source_distance_mm: 150.0,
            source_pan_deg: 35.0,
            source_pixel_pitch_um: 16.2,
            source_rows: 801,
            source_cols: 801,
            lit_grid: 17,
            rays_per_point: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KogelnikConfig {
    pub wavelength_nm: f64,
    pub n0: f64,
    pub n1: f64,
    pub thickness_um: f64,
    pub theta_min_deg: f64,
    pub theta_max_deg: f64,
    pub theta_step_deg: f64,
    /// Replay angle offset applied to every cell of the map.
    pub detuning_deg: f64,
}

impl Default for KogelnikConfig {
    fn default() -> Self {
        Self {
            wavelength_nm: 532.0,
            n0: 1.5,
            n1: 0.04,
            thickness_um: 30.0,
            theta_min_deg: 0.0,
            theta_max_deg: 70.0,
            theta_step_deg: 0.5,
            detuning_deg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CghConfig {
    /// Target image (`.hbgf` real grid or `.png`); procedural scene if unset.
    pub image_path: Option<PathBuf>,
    /// Depth map in `[0, 1]`, same formats as `image_path`.
    pub depth_path: Option<PathBuf>,
    /// Phase hologram to reconstruct: `.hbgf` radians or a `.png` phase preview.
    pub hologram_path: Option<PathBuf>,
    /// Complex field to encode (`.hbgf` complex grid). When unset the target
    /// image is back-propagated from the first plane.
    pub field_path: Option<PathBuf>,
    pub rows: usize,
    pub cols: usize,
    pub n_planes: usize,
    pub base_distance_mm: f64,
    pub plane_separation_mm: f64,
    pub pitch_um: f64,
    pub wavelength_nm: f64,
    pub iterations: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub loss_report_every: usize,
    pub linear_grating: bool,
}

impl Default for CghConfig {
    fn default() -> Self {
        Self {
            image_path: None,
            depth_path: None,
            hologram_path: None,
            field_path: None,
            rows: 256,
            cols: 256,
            n_planes: 6,
            base_distance_mm: 2.0,
            plane_separation_mm: 1.0,
            pitch_um: 3.74,
            wavelength_nm: 532.0,
            iterations: 200,
            step_size: 0.1,
            momentum: 0.0,
            loss_report_every: 10,
            linear_grating: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub axis: String,
    pub translation_range_mm: [f64; 2],
    pub translation_step_mm: f64,
    pub orientation_range_deg: [f64; 2],
    pub orientation_step_deg: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axis: SweepAxis::EyeboxXy.name().to_string(),
            translation_range_mm: [-4.0, 4.0],
            translation_step_mm: 0.25,
            orientation_range_deg: [-10.0, 10.0],
            orientation_step_deg: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub png: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            png: true,
        }
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn check_positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be finite and > 0, got {v}")))
    }
}

fn check_count(key: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(invalid(key, format!("must be >= {min}, got {v}")))
    }
}

fn check_finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(key, format!("must be finite, got {v}")))
    }
}

impl ExperimentConfig {
    /// Range checks that do not need the physics modules. Keys are reported
    /// as `section.key`.
    pub fn validate(&self) -> Result<()> {
        let o = &self.optics;
        for (k, v) in [
            ("optics.hoe_focal_length_mm", o.hoe_focal_length_mm),
            ("optics.hoe_aperture_radius_mm", o.hoe_aperture_radius_mm),
            ("optics.eye_lens_focal_mm", o.eye_lens_focal_mm),
            ("optics.retina_distance_mm", o.retina_distance_mm),
            ("optics.retina_half_extent_mm", o.retina_half_extent_mm),
            ("optics.source_distance_mm", o.source_distance_mm),
            ("optics.source_pixel_pitch_um", o.source_pixel_pitch_um),
            ("optics.eyeball_distance_mm", o.eyeball_distance_mm),
        ] {
            check_positive(k, v)?;
        }
        if !(o.pupil_diameter_mm >= 0.0) || !o.pupil_diameter_mm.is_finite() {
            return Err(invalid(
                "optics.pupil_diameter_mm",
                format!("must be finite and >= 0, got {}", o.pupil_diameter_mm),
            ));
        }
        check_finite("optics.pupil_offset_mm", o.pupil_offset_mm)?;
        check_finite("optics.hoe_tilt_pan_deg", o.hoe_tilt_pan_deg)?;
        check_finite("optics.source_pan_deg", o.source_pan_deg)?;
        check_count("optics.retina_rows", o.retina_rows, 1)?;
        check_count("optics.retina_cols", o.retina_cols, 1)?;
        check_count("optics.source_rows", o.source_rows, 1)?;
        check_count("optics.source_cols", o.source_cols, 1)?;
        check_count("optics.lit_grid", o.lit_grid, 1)?;
        check_count("optics.rays_per_point", o.rays_per_point, 1)?;

        let k = &self.kogelnik;
        check_positive("kogelnik.wavelength_nm", k.wavelength_nm)?;
        check_positive("kogelnik.n0", k.n0)?;
        check_positive("kogelnik.n1", k.n1)?;
        check_positive("kogelnik.thickness_um", k.thickness_um)?;
        if k.n1 >= k.n0 {
            return Err(invalid("kogelnik.n1", "must be smaller than n0"));
        }
        check_positive("kogelnik.theta_step_deg", k.theta_step_deg)?;
        if !(k.theta_min_deg < k.theta_max_deg) {
            return Err(invalid(
                "kogelnik.theta_max_deg",
                "must exceed theta_min_deg",
            ));
        }
        check_finite("kogelnik.detuning_deg", k.detuning_deg)?;

        let c = &self.cgh;
        check_count("cgh.rows", c.rows, 2)?;
        check_count("cgh.cols", c.cols, 2)?;
        check_count("cgh.n_planes", c.n_planes, 1)?;
        check_count("cgh.iterations", c.iterations, 1)?;
        check_count("cgh.loss_report_every", c.loss_report_every, 1)?;
        check_finite("cgh.base_distance_mm", c.base_distance_mm)?;
        check_positive("cgh.plane_separation_mm", c.plane_separation_mm)?;
        check_positive("cgh.pitch_um", c.pitch_um)?;
        check_positive("cgh.wavelength_nm", c.wavelength_nm)?;
        check_positive("cgh.step_size", c.step_size)?;
        if !(0.0..1.0).contains(&c.momentum) {
            return Err(invalid(
                "cgh.momentum",
                format!("must lie in [0, 1), got {}", c.momentum),
            ));
        }

        self.sweep_axis()?;
        let s = &self.sweep;
        check_positive("sweep.translation_step_mm", s.translation_step_mm)?;
        check_positive("sweep.orientation_step_deg", s.orientation_step_deg)?;
        Ok(())
    }

    pub fn material(&self) -> Material {
        let k = &self.kogelnik;
        Material {
            wavelength: k.wavelength_nm / PER_NM,
            n0: k.n0,
            n1: k.n1,
            thickness: k.thickness_um / PER_UM,
        }
    }

    pub fn scene(&self) -> Scene {
        let o = &self.optics;
        let material = self.material();
        let pan = o.source_pan_deg.to_radians();
        Scene {
            hoe: HoeElement {
                aperture_radius: o.hoe_aperture_radius_mm * MM,
                focal_length: o.hoe_focal_length_mm * MM,
                tilt_pan: o.hoe_tilt_pan_deg.to_radians(),
                material,
                ..HoeElement::default()
            },
            eye: EyeModel {
                eyeball_center: Vector3::new(0.0, 0.0, -o.eyeball_distance_mm * MM),
                pupil_offset: o.pupil_offset_mm * MM,
                pupil_diameter: o.pupil_diameter_mm * MM,
                lens_focal: o.eye_lens_focal_mm * MM,
                retina_distance: o.retina_distance_mm * MM,
                retina: RetinaGrid {
                    rows: o.retina_rows,
                    cols: o.retina_cols,
                    half_extent: o.retina_half_extent_mm * MM,
                },
                ..EyeModel::default()
            },
            source: SourceGrid {
                center: Vector3::new(pan.sin(), 0.0, pan.cos()) * o.source_distance_mm * MM,
                pixel_pitch: o.source_pixel_pitch_um / PER_UM,
                image_rows: o.source_rows,
                image_cols: o.source_cols,
                lit_points: SourceGrid::point_grid(o.lit_grid, o.source_rows, o.source_cols),
                wavelength: material.wavelength,
                aim_point: Vector3::zeros(),
            },
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        let c = &self.cgh;
        OptimizerConfig {
            iterations: c.iterations,
            step_size: c.step_size,
            seed: self.seed,
            loss_report_every: c.loss_report_every,
            momentum: c.momentum,
        }
    }

    pub fn sweep_axis(&self) -> Result<SweepAxis> {
        SweepAxis::parse(&self.sweep.axis).ok_or_else(|| {
            invalid(
                "sweep.axis",
                format!(
                    "unknown axis `{}`; expected eyebox_xy, eyebox_xz, head_pan_tilt, \
                     head_translation_xy or head_translation_xz",
                    self.sweep.axis
                ),
            )
        })
    }

    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let axis = self.sweep_axis()?;
        let s = &self.sweep;
        let (range, step) = match axis {
            SweepAxis::HeadPanTilt => (s.orientation_range_deg, s.orientation_step_deg),
            _ => (s.translation_range_mm, s.translation_step_mm),
        };
        Ok(SweepConfig {
            axis,
            range_lo: range[0],
            range_hi: range[1],
            step,
            rays_per_point: self.optics.rays_per_point,
            seed: self.seed,
        })
    }

    /// Hex SHA-256 of the config with the output directory blanked, so the
    /// same experiment gets the same artifact names wherever it is written.
    pub fn content_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.directory = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Applies a `section.key=value` override to a raw JSON document. The value
/// is parsed as JSON when possible, otherwise taken as a string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| invalid(assignment, "override must look like section.key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| invalid(path, "cannot descend into a non-object"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Parses and validates a config document. `origin` labels parse errors.
pub fn parse_config_str(text: &str, origin: &str) -> Result<ExperimentConfig> {
    let doc: Value = serde_json::from_str(text).map_err(|e| parse_error(origin, &e))?;
    config_from_value(doc, origin)
}

pub fn config_from_value(doc: Value, origin: &str) -> Result<ExperimentConfig> {
    // Round-trip through text so serde reports positions against a document
    // the user can look at.
    let text = serde_json::to_string_pretty(&doc).expect("value serializes");
    let config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| unit_error(&e).unwrap_or_else(|| parse_error(origin, &e)))?;
    config.validate()?;
    Ok(config)
}

pub fn parse_config(path: &Path) -> std::result::Result<ExperimentConfig, crate::Error> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
    Ok(parse_config_str(&text, &path.display().to_string())?)
}

/// Reads a config file (or the defaults when `path` is `None`), applies
/// overrides and validates.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[String],
) -> std::result::Result<ExperimentConfig, crate::Error> {
    let (mut doc, origin) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| crate::Error::io(p, e))?;
            let origin = p.display().to_string();
            let doc = serde_json::from_str(&text).map_err(|e| parse_error(&origin, &e))?;
            (doc, origin)
        }
        None => (Value::Object(Default::default()), "<defaults>".to_string()),
    };
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    Ok(config_from_value(doc, &origin)?)
}

fn parse_error(origin: &str, e: &serde_json::Error) -> ConfigError {
    ConfigError::Parse {
        path: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Recognizes `unknown field `x`` where `x` plus a unit suffix is a real
/// key.
fn unit_error(e: &serde_json::Error) -> Option<ConfigError> {
    let msg = e.to_string();
    let rest = msg.strip_prefix("unknown field `")?;
    let (key, expected) = rest.split_once('`')?;
    UNIT_SUFFIXES
        .iter()
        .any(|s| expected.contains(&format!("`{key}{s}`")))
        .then(|| ConfigError::MissingUnit {
            key: key.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = parse_config_str("{}", "t").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        let c = parse_config_str(r#"{"optics": {}}"#, "t").unwrap();
        let m = c.material();
        assert_eq!(m, Material::HX120_532);
        let scene = c.scene();
        assert_eq!(scene, Scene::default());
    }

    #[test]
    fn negative_pupil_names_key() {
        let err = parse_config_str(r#"{"optics": {"pupil_diameter_mm": -1}}"#, "t").unwrap_err();
        match &err {
            ConfigError::Invalid { key, .. } => assert_eq!(key, "optics.pupil_diameter_mm"),
            other => panic!("{other:?}"),
        }
        assert!(err.to_string().contains("pupil_diameter_mm"));
    }

    #[test]
    fn parse_error_has_position() {
        let err = parse_config_str("{\n  \"seed\": 1,\n  oops\n}", "cfg.json").unwrap_err();
        match err {
            ConfigError::Parse { line, path, .. } => {
                assert_eq!(line, 3);
                assert_eq!(path, "cfg.json");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_and_unitless_keys() {
        let err = parse_config_str(r#"{"optics": {"pupil_diameter": 3}}"#, "t").unwrap_err();
        assert!(matches!(err, ConfigError::MissingUnit { ref key } if key == "pupil_diameter"));
        let err = parse_config_str(r#"{"optics": {"colour": 3}}"#, "t").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }));
        let err = parse_config_str(r#"{"extra": 3}"#, "t").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }));
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig {
            seed: 42,
            ..ExperimentConfig::default()
        };
        c.optics.pupil_diameter_mm = 4.5;
        c.cgh.image_path = Some(PathBuf::from("a.png"));
        c.sweep.axis = "head_pan_tilt".into();
        let again = parse_config_str(&c.to_json(), "t").unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn overrides() {
        let mut doc = Value::Object(Default::default());
        apply_override(&mut doc, "sweep.axis=head_pan_tilt").unwrap();
        apply_override(&mut doc, "optics.rays_per_point=7").unwrap();
        apply_override(&mut doc, "seed=9").unwrap();
        let c = config_from_value(doc, "t").unwrap();
        assert_eq!(c.sweep_axis().unwrap(), SweepAxis::HeadPanTilt);
        assert_eq!(c.optics.rays_per_point, 7);
        assert_eq!(c.seed, 9);
        let mut doc = Value::Object(Default::default());
        assert!(apply_override(&mut doc, "no_equals").is_err());
    }

    #[test]
    fn bad_axis_rejected() {
        let err = parse_config_str(r#"{"sweep": {"axis": "roll"}}"#, "t").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref key, .. } if key == "sweep.axis"));
    }

    #[test]
    fn sweep_config_uses_axis_units() {
        let mut c = ExperimentConfig::default();
        assert_eq!(c.sweep_config().unwrap().values().unwrap().len(), 33);
        c.sweep.axis = "head_pan_tilt".into();
        let s = c.sweep_config().unwrap();
        assert_eq!((s.range_lo, s.range_hi, s.step), (-10.0, 10.0, 0.5));
        assert_eq!(s.values().unwrap().len(), 41);
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output.directory = PathBuf::from("/elsewhere");
        assert_eq!(a.content_hash(), b.content_hash());
        b.seed = 1;
        assert_ne!(a.content_hash(), b.content_hash());
        assert_eq!(a.content_hash().len(), 64);
    }
}
