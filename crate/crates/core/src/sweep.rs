//! Misalignment sweeps: eyebox translation, head orientation and head
//! translation, each over a 2D parameter grid.
//!
//! Every cell is rendered with the same seed (common random numbers), so the
//! unperturbed cell reproduces the baseline exactly and neighbouring cells
//! differ only by geometry, not by sampling noise.

use std::fmt;

use nalgebra::Vector3;
use ndarray::Array2;
use rayon::prelude::*;

use crate::error::SweepError;
use crate::raytrace::{render_retinal_image, RetinalImage, Scene};

type Result<T> = std::result::Result<T, SweepError>;

const MM: f64 = 1e-3;

/// 10-entry categorical palette for hit accumulation.
pub const PALETTE: [[u8; 3]; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

/// Every `HIT_SAMPLE_STRIDE`-th cell (row-major) contributes to the hit map.
pub const HIT_SAMPLE_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    /// Eye translated in x–y (mm); HOE and source fixed.
    EyeboxXy,
    /// Eye translated in x–z (mm).
    EyeboxXz,
    /// Eye and HOE rotated together about the eyeball center: pan, tilt (deg).
    HeadPanTilt,
    /// Eye and HOE translated together in x–y (mm).
    HeadTranslationXy,
    /// Eye and HOE translated together in x–z (mm).
    HeadTranslationXz,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::EyeboxXy => "eyebox_xy",
            SweepAxis::EyeboxXz => "eyebox_xz",
            SweepAxis::HeadPanTilt => "head_pan_tilt",
            SweepAxis::HeadTranslationXy => "head_translation_xy",
            SweepAxis::HeadTranslationXz => "head_translation_xz",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "eyebox" | "eyebox_xy" => SweepAxis::EyeboxXy,
            "eyebox_xz" => SweepAxis::EyeboxXz,
            "head_pan_tilt" | "orientation" | "head_orientation" => SweepAxis::HeadPanTilt,
            "head_translation" | "head_translation_xy" => SweepAxis::HeadTranslationXy,
            "head_translation_xz" => SweepAxis::HeadTranslationXz,
            _ => return None,
        })
    }

    /// Names of the two swept parameters.
    pub fn labels(self) -> (&'static str, &'static str) {
        match self {
            SweepAxis::EyeboxXy | SweepAxis::HeadTranslationXy => ("x_mm", "y_mm"),
            SweepAxis::EyeboxXz | SweepAxis::HeadTranslationXz => ("x_mm", "z_mm"),
            SweepAxis::HeadPanTilt => ("pan_deg", "tilt_deg"),
        }
    }

    /// Perturbed scene for parameters `(a, b)` in this axis's units.
    pub fn apply(self, scene: &Scene, a: f64, b: f64) -> Scene {
        match self {
            SweepAxis::EyeboxXy => scene.with_eye_offset(Vector3::new(a, b, 0.0) * MM),
            SweepAxis::EyeboxXz => scene.with_eye_offset(Vector3::new(a, 0.0, b) * MM),
            SweepAxis::HeadPanTilt => scene.with_head_rotation(a.to_radians(), b.to_radians()),
            SweepAxis::HeadTranslationXy => {
                scene.with_head_translation(Vector3::new(a, b, 0.0) * MM)
            }
            SweepAxis::HeadTranslationXz => {
                scene.with_head_translation(Vector3::new(a, 0.0, b) * MM)
            }
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub range_lo: f64,
    pub range_hi: f64,
    pub step: f64,
    pub rays_per_point: usize,
    pub seed: u64,
}

impl SweepConfig {
    /// Default ranges: ±4 mm / 0.25 mm for translations, ±10° / 0.5°
    /// for orientation.
    pub fn standard(axis: SweepAxis) -> Self {
        let (range, step) = match axis {
            SweepAxis::HeadPanTilt => (10.0, 0.5),
            _ => (4.0, 0.25),
        };
        Self {
            axis,
            range_lo: -range,
            range_hi: range,
            step,
            rays_per_point: 100,
            seed: 0,
        }
    }

    /// Grid values, endpoints inclusive. The range must contain zero.
    pub fn values(&self) -> Result<Vec<f64>> {
        let (lo, hi, step) = (self.range_lo, self.range_hi, self.step);
        if !(lo < hi) || !(step > 0.0) || !lo.is_finite() || !hi.is_finite() {
            return Err(SweepError::InvalidRange(format!(
                "need lo < hi and step > 0, got [{lo}, {hi}] step {step}"
            )));
        }
        let intervals = (hi - lo) / step;
        if (intervals - intervals.round()).abs() > 1e-9 {
            return Err(SweepError::InvalidRange(format!(
                "({hi} - {lo}) / {step} = {intervals} is not an integer"
            )));
        }
        let n = intervals.round() as usize + 1;
        let values: Vec<f64> = (0..n)
            .map(|i| {
                let v = lo + i as f64 * step;
                if v.abs() < 1e-12 * step {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        if !values.contains(&0.0) {
            return Err(SweepError::InvalidRange(format!(
                "grid [{lo}, {hi}] step {step} does not contain the unperturbed layout"
            )));
        }
        if self.rays_per_point < 1 {
            return Err(SweepError::InvalidRange(
                "rays_per_point must be >= 1".into(),
            ));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub values_a: Vec<f64>,
    pub values_b: Vec<f64>,
    /// `brightness[[i, j]]` for `(values_a[i], values_b[j])`, relative to the
    /// unperturbed layout.
    pub brightness: Array2<f64>,
    pub baseline_total: f64,
    /// Palette index + 1 of the last sampled viewpoint that hit each retinal
    /// pixel; 0 where no sampled viewpoint hit.
    pub hit_labels: Array2<u8>,
    /// Retinal intensity summed over all viewpoints.
    pub intensity_accumulation: Array2<f64>,
}

impl SweepResult {
    pub fn center(&self) -> (usize, usize) {
        let i = self
            .values_a
            .iter()
            .position(|&v| v == 0.0)
            .expect("validated");
        let j = self
            .values_b
            .iter()
            .position(|&v| v == 0.0)
            .expect("validated");
        (i, j)
    }

    /// Brightness along `a` with `b` held at zero.
    pub fn profile_a(&self) -> Vec<f64> {
        let (_, j) = self.center();
        self.brightness.column(j).to_vec()
    }

    /// Brightness along `b` with `a` held at zero.
    pub fn profile_b(&self) -> Vec<f64> {
        let (i, _) = self.center();
        self.brightness.row(i).to_vec()
    }

    /// RGB rendering of [`Self::hit_labels`]; unhit pixels are black.
    pub fn hit_accumulation_rgb(&self) -> Array2<[u8; 3]> {
        self.hit_labels.mapv(|l| {
            if l == 0 {
                [0, 0, 0]
            } else {
                PALETTE[(l - 1) as usize]
            }
        })
    }

    /// `(param_a, param_b, relative_brightness)` rows in row-major order.
    pub fn rows(&self) -> Vec<(f64, f64, f64)> {
        self.brightness
            .indexed_iter()
            .map(|((i, j), &v)| (self.values_a[i], self.values_b[j], v))
            .collect()
    }
}

pub fn relative_brightness(image: &RetinalImage, baseline: &RetinalImage) -> Result<f64> {
    let base = baseline.total_intensity();
    if !(base > 0.0) {
        return Err(SweepError::DegenerateBaseline);
    }
    Ok(image.total_intensity() / base)
}

struct CellOutput {
    total: f64,
    image: RetinalImage,
}

/// Runs one misalignment sweep.
pub fn run_sweep(scene: &Scene, config: &SweepConfig) -> Result<SweepResult> {
    let values = config.values()?;
    let baseline = render_retinal_image(scene, config.rays_per_point, config.seed)?;
    let baseline_total = baseline.total_intensity();
    if !(baseline_total > 0.0) {
        return Err(SweepError::DegenerateBaseline);
    }

    let n = values.len();
    let grid = scene.eye.retina;
    let mut brightness = Array2::zeros((n, n));
    let mut hit_labels = Array2::zeros((grid.rows, grid.cols));
    let mut intensity_accumulation = Array2::zeros((grid.rows, grid.cols));

    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    // Parallel within a chunk, sequential reduction across chunks in cell
    // order.
    let chunk = rayon::current_num_threads().max(1) * 4;
    for (chunk_index, block) in cells.chunks(chunk).enumerate() {
        let rendered = block
            .par_iter()
            .map(|&(i, j)| {
                let (a, b) = (values[i], values[j]);
                let image = if a == 0.0 && b == 0.0 {
                    baseline.clone()
                } else {
                    let perturbed = config.axis.apply(scene, a, b);
                    render_retinal_image(&perturbed, config.rays_per_point, config.seed)?
                };
                Ok(CellOutput {
                    total: image.total_intensity(),
                    image,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for (offset, (&(i, j), out)) in block.iter().zip(&rendered).enumerate() {
            let k = chunk_index * chunk + offset;
            brightness[(i, j)] = out.total / baseline_total;
            intensity_accumulation += &out.image.intensity;
            if k.is_multiple_of(HIT_SAMPLE_STRIDE) {
                let label = ((k / HIT_SAMPLE_STRIDE) % PALETTE.len()) as u8 + 1;
                for (dst, &hits) in hit_labels.iter_mut().zip(&out.image.hit_count) {
                    if hits > 0 {
                        *dst = label;
                    }
                }
            }
        }
    }

    Ok(SweepResult {
        axis: config.axis,
        values_a: values.clone(),
        values_b: values,
        brightness,
        baseline_total,
        hit_labels,
        intensity_accumulation,
    })
}

/// `(max − min) / mean` along the two center lines of a brightness map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpread {
    pub along_a: f64,
    pub along_b: f64,
}

pub fn spread(profile: &[f64]) -> f64 {
    let max = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = profile.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = profile.iter().sum::<f64>() / profile.len() as f64;
    if max == min {
        0.0
    } else if mean > 0.0 {
        (max - min) / mean
    } else {
        f64::INFINITY
    }
}

pub fn compare_axis_robustness(result: &SweepResult) -> AxisSpread {
    AxisSpread {
        along_a: spread(&result.profile_a()),
        along_b: spread(&result.profile_b()),
    }
}

/// Interior strict local maxima; a plateau counts once.
pub fn count_local_maxima(profile: &[f64]) -> usize {
    let mut count = 0;
    let mut i = 1;
    while i + 1 < profile.len() {
        if profile[i] > profile[i - 1] {
            let mut j = i;
            while j + 1 < profile.len() && profile[j + 1] == profile[i] {
                j += 1;
            }
            if j + 1 < profile.len() && profile[j + 1] < profile[i] {
                count += 1;
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    count
}
