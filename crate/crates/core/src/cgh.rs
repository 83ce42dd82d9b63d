//! Multiplane phase-only hologram synthesis.
//!
//! Sign convention: the physical SLM modulation is `O_h = exp(-jφ)`. All
//! propagation in this module acts on `exp(+iφ)`, which is the same field
//! under the opposite time convention; [`PhaseHologram::slm_modulation`]
//! returns the physical form for export.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{CghError, WavefieldError};
use crate::wavefield::{intensity, ComplexField, Propagator};

type Result<T> = std::result::Result<T, CghError>;

/// Wraps an angle into `[-π, π)`.
pub fn wrap_phase(x: f64) -> f64 {
    if (-PI..PI).contains(&x) {
        return x;
    }
    let two_pi = 2.0 * PI;
    // rem_euclid is exact, so this stays in range for large |x| too.
    let r = (x + PI).rem_euclid(two_pi) - PI;
    if r >= PI {
        r - two_pi
    } else {
        r
    }
}

/// Largest per-pixel phase update (radians) that still carries sub-radian
/// information in an f64.
const MAX_PHASE_UPDATE: f64 = 1e12;

/// Per-plane targets for multiplane optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneTargetStack {
    targets: Vec<Array2<f64>>,
    masks: Vec<Array2<bool>>,
    distances: Vec<f64>,
    weights: Vec<f64>,
}

impl PlaneTargetStack {
    pub fn new(
        targets: Vec<Array2<f64>>,
        masks: Vec<Array2<bool>>,
        distances: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let n = targets.len();
        if n == 0 || masks.len() != n || distances.len() != n || weights.len() != n {
            return Err(CghError::InvalidParameter {
                name: "planes",
                reason: format!(
                    "need equal non-zero counts, got {} targets, {} masks, {} distances, {} weights",
                    n,
                    masks.len(),
                    distances.len(),
                    weights.len()
                ),
            });
        }
        let shape = targets[0].dim();
        if targets.iter().any(|t| t.dim() != shape) || masks.iter().any(|m| m.dim() != shape) {
            return Err(CghError::IncompatibleGrid(
                "all target and mask grids must share one shape".into(),
            ));
        }
        if distances.iter().any(|d| !d.is_finite()) || distances.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CghError::InvalidParameter {
                name: "distances",
                reason: "must be finite and strictly increasing".into(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(CghError::InvalidParameter {
                name: "weights",
                reason: "must be finite and non-negative".into(),
            });
        }
        Ok(Self {
            targets,
            masks,
            distances,
            weights,
        })
    }

    pub fn n_planes(&self) -> usize {
        self.targets.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.targets[0].dim()
    }

    pub fn targets(&self) -> &[Array2<f64>] {
        &self.targets
    }

    pub fn masks(&self) -> &[Array2<bool>] {
        &self.masks
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.weights = weights;
        Self::new(self.targets, self.masks, self.distances, self.weights)
    }
}

/// Depth bin of a normalized depth value. Values on a bin edge go to the
/// lower bin; depth 0 lands in bin 0.
pub fn depth_bin(depth: f64, n_planes: usize) -> usize {
    let scaled = (depth * n_planes as f64).ceil() as isize - 1;
    scaled.clamp(0, n_planes as isize - 1) as usize
}

pub fn build_plane_targets(
    image: &Array2<f64>,
    depth: &Array2<f64>,
    n_planes: usize,
    base_distance: f64,
    separation: f64,
) -> Result<PlaneTargetStack> {
    if image.dim() != depth.dim() {
        return Err(CghError::IncompatibleGrid(format!(
            "image {:?} vs depth {:?}",
            image.dim(),
            depth.dim()
        )));
    }
    if n_planes < 1 {
        return Err(CghError::InvalidParameter {
            name: "n_planes",
            reason: "must be at least 1".into(),
        });
    }
    if !(separation > 0.0) || !separation.is_finite() || !base_distance.is_finite() {
        return Err(CghError::InvalidParameter {
            name: "separation",
            reason: format!("need finite base distance and separation > 0, got {separation}"),
        });
    }
    if depth.iter().any(|d| !(0.0..=1.0).contains(d)) {
        return Err(CghError::InvalidParameter {
            name: "depth",
            reason: "values must lie in [0, 1]".into(),
        });
    }
    let bins = depth.mapv(|d| depth_bin(d, n_planes));
    let masks: Vec<Array2<bool>> = (0..n_planes).map(|p| bins.mapv(|b| b == p)).collect();
    let targets = masks
        .iter()
        .map(|m| {
            Zip::from(image)
                .and(m)
                .map_collect(|&v, &inside| if inside { v } else { 0.0 })
        })
        .collect();
    let distances = (0..n_planes)
        .map(|p| base_distance + p as f64 * separation)
        .collect();
    PlaneTargetStack::new(targets, masks, distances, vec![1.0; n_planes])
}

/// Phase-only hologram with phase wrapped to `[-π, π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseHologram {
    phase: Array2<f64>,
    pitch: f64,
    wavelength: f64,
}

impl PhaseHologram {
    pub fn new(phase: Array2<f64>, pitch: f64, wavelength: f64) -> Result<Self> {
        if phase.iter().any(|p| !p.is_finite()) {
            return Err(CghError::InvalidParameter {
                name: "phase",
                reason: "non-finite entry".into(),
            });
        }
        // Validates pitch and wavelength as a side effect.
        ComplexField::zeros(phase.nrows(), phase.ncols(), pitch, wavelength)?;
        Ok(Self {
            phase: phase.mapv(wrap_phase),
            pitch,
            wavelength,
        })
    }

    /// Seeded uniform phase in `[-π, π)`.
    pub fn random(
        rows: usize,
        cols: usize,
        pitch: f64,
        wavelength: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = crate::seed::rng(seed, 0);
        let phase = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-PI..PI));
        Self::new(phase, pitch, wavelength)
    }

    pub fn phase(&self) -> &Array2<f64> {
        &self.phase
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn shape(&self) -> (usize, usize) {
        self.phase.dim()
    }

    /// `exp(+iφ)`, the field used for propagation.
    pub fn field(&self) -> ComplexField {
        ComplexField::from_phase(&self.phase, self.pitch, self.wavelength)
            .expect("validated at construction")
    }

    /// Physical SLM modulation `O_h = exp(-jφ)`.
    pub fn slm_modulation(&self) -> Array2<Complex64> {
        self.phase.mapv(|p| Complex64::from_polar(1.0, -p))
    }
}

/// Optimizer settings. `momentum` defaults to zero (plain gradient descent).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub iterations: usize,
    pub step_size: f64,
    pub seed: u64,
    pub loss_report_every: usize,
    pub momentum: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            step_size: 0.1,
            seed: 0,
            loss_report_every: 10,
            momentum: 0.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(CghError::InvalidParameter {
                name: "iterations",
                reason: "must be >= 1".into(),
            });
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(CghError::InvalidParameter {
                name: "step_size",
                reason: format!("must be finite and > 0, got {}", self.step_size),
            });
        }
        if self.loss_report_every < 1 {
            return Err(CghError::InvalidParameter {
                name: "loss_report_every",
                reason: "must be >= 1".into(),
            });
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CghError::InvalidParameter {
                name: "momentum",
                reason: format!("must lie in [0, 1), got {}", self.momentum),
            });
        }
        Ok(())
    }
}

/// Masked multiplane intensity loss with cached propagators.
#[derive(Debug, Clone)]
pub struct MultiplaneObjective<'a> {
    stack: &'a PlaneTargetStack,
    propagators: Vec<Propagator>,
    pitch: f64,
    wavelength: f64,
}

impl<'a> MultiplaneObjective<'a> {
    pub fn new(stack: &'a PlaneTargetStack, pitch: f64, wavelength: f64) -> Result<Self> {
        let (rows, cols) = stack.shape();
        let propagators = stack
            .distances()
            .iter()
            .map(|&z| Propagator::new(rows, cols, pitch, wavelength, z))
            .collect::<std::result::Result<_, WavefieldError>>()?;
        Ok(Self {
            stack,
            propagators,
            pitch,
            wavelength,
        })
    }

    fn check(&self, h: &PhaseHologram) -> Result<()> {
        if h.shape() != self.stack.shape() {
            return Err(CghError::IncompatibleGrid(format!(
                "hologram {:?} vs targets {:?}",
                h.shape(),
                self.stack.shape()
            )));
        }
        if h.pitch != self.pitch || h.wavelength != self.wavelength {
            return Err(CghError::IncompatibleGrid(
                "hologram pitch/wavelength differ from the objective".into(),
            ));
        }
        Ok(())
    }

    /// Loss only.
    pub fn loss(&self, h: &PhaseHologram) -> Result<f64> {
        self.check(h)?;
        let field = h.field();
        let per_plane = (0..self.stack.n_planes())
            .into_par_iter()
            .map(|p| {
                let u = self.propagators[p].forward(&field)?;
                Ok(self.plane_loss(p, &intensity(&u)))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(per_plane.iter().sum())
    }

    fn plane_loss(&self, p: usize, recon: &Array2<f64>) -> f64 {
        let w = self.stack.weights[p];
        let mut acc = 0.0;
        Zip::from(recon)
            .and(&self.stack.targets[p])
            .and(&self.stack.masks[p])
            .for_each(|&i, &t, &m| {
                if m {
                    acc += (i - t) * (i - t);
                }
            });
        w * acc
    }

    /// Loss and its gradient with respect to the phase.
    ///
    /// `grad = Σ_p 4 w_p Im(e^{-iφ} ⊙ P_pᴴ[m_p (|u_p|² − T_p) u_p])`, where
    /// `P_pᴴ` propagates with the conjugate transfer function.
    pub fn loss_and_gradient(&self, h: &PhaseHologram) -> Result<(f64, Array2<f64>)> {
        self.check(h)?;
        let field = h.field();
        let per_plane = (0..self.stack.n_planes())
            .into_par_iter()
            .map(|p| {
                let u = self.propagators[p].forward(&field)?;
                let recon = intensity(&u);
                let loss = self.plane_loss(p, &recon);
                let w = self.stack.weights[p];
                let residual = Zip::from(u.data())
                    .and(&recon)
                    .and(&self.stack.targets[p])
                    .and(&self.stack.masks[p])
                    .map_collect(|&uv, &i, &t, &m| {
                        if m {
                            uv * (4.0 * w * (i - t))
                        } else {
                            Complex64::new(0.0, 0.0)
                        }
                    });
                let back = self.propagators[p].adjoint(&u.with_data(residual)?)?;
                let grad = Zip::from(back.data())
                    .and(field.data())
                    .map_collect(|&b, &e| (e.conj() * b).im);
                Ok((loss, grad))
            })
            .collect::<Result<Vec<_>>>()?;

        // Fixed reduction order keeps results independent of scheduling.
        let mut loss = 0.0;
        let mut grad = Array2::zeros(h.shape());
        for (l, g) in per_plane {
            loss += l;
            grad += &g;
        }
        Ok((loss, grad))
    }
}

pub fn loss_and_gradient(
    h: &PhaseHologram,
    stack: &PlaneTargetStack,
) -> Result<(f64, Array2<f64>)> {
    MultiplaneObjective::new(stack, h.pitch, h.wavelength)?.loss_and_gradient(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub hologram: PhaseHologram,
    pub initial: PhaseHologram,
    /// `(iteration, loss)` every `loss_report_every` iterations, always
    /// including iteration 0 and the final state (iteration = `iterations`).
    pub trace: Vec<(usize, f64)>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Gradient descent on the masked multiplane loss from a seeded random phase.
pub fn optimize_multiplane_phase(
    stack: &PlaneTargetStack,
    config: &OptimizerConfig,
    pitch: f64,
    wavelength: f64,
) -> Result<OptimizationResult> {
    config.validate()?;
    let objective = MultiplaneObjective::new(stack, pitch, wavelength)?;
    let (rows, cols) = stack.shape();
    let initial = PhaseHologram::random(rows, cols, pitch, wavelength, config.seed)?;

    let mut phase = initial.phase.clone();
    let mut velocity: Array2<f64> = Array2::zeros((rows, cols));
    let mut trace = Vec::new();
    let mut initial_loss = f64::NAN;
    for iteration in 0..config.iterations {
        let h = PhaseHologram {
            phase: phase.clone(),
            pitch,
            wavelength,
        };
        let (loss, grad) = objective.loss_and_gradient(&h)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(CghError::Divergence { iteration, loss });
        }
        if iteration == 0 {
            initial_loss = loss;
        }
        if iteration % config.loss_report_every == 0 {
            trace.push((iteration, loss));
        }
        Zip::from(&mut velocity)
            .and(&grad)
            .for_each(|v, &g| *v = config.momentum * *v + g);
        let max_update = velocity
            .iter()
            .fold(0.0f64, |m, v| m.max((config.step_size * v).abs()));
        if !(max_update <= MAX_PHASE_UPDATE) {
            return Err(CghError::Divergence { iteration, loss });
        }
        Zip::from(&mut phase)
            .and(&velocity)
            .for_each(|p, &v| *p = wrap_phase(*p - config.step_size * v));
    }

    let hologram = PhaseHologram {
        phase,
        pitch,
        wavelength,
    };
    let final_loss = objective.loss(&hologram)?;
    if !final_loss.is_finite() {
        return Err(CghError::Divergence {
            iteration: config.iterations,
            loss: final_loss,
        });
    }
    trace.push((config.iterations, final_loss));
    Ok(OptimizationResult {
        hologram,
        initial,
        trace,
        initial_loss,
        final_loss,
    })
}

/// Splits a complex field into two phase channels whose unit phasors average
/// to `(a / a_max)·e^{iφ}`.
pub fn complex_to_double_phase(
    field: &ComplexField,
    a_max: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if !(a_max > 0.0) || !a_max.is_finite() {
        return Err(CghError::InvalidParameter {
            name: "a_max",
            reason: format!("must be finite and > 0, got {a_max}"),
        });
    }
    let (rows, cols) = (field.rows(), field.cols());
    let mut chan_a = Array2::zeros((rows, cols));
    let mut chan_b = Array2::zeros((rows, cols));
    for ((row, col), z) in field.data().indexed_iter() {
        let amplitude = z.norm();
        if amplitude > a_max {
            return Err(CghError::AmplitudeOverflow {
                row,
                col,
                amplitude,
                a_max,
            });
        }
        let phi = z.arg();
        let offset = (amplitude / a_max).acos();
        chan_a[(row, col)] = wrap_phase(phi + offset);
        chan_b[(row, col)] = wrap_phase(phi - offset);
    }
    Ok((chan_a, chan_b))
}

/// `true` where the checkerboard takes channel `a`: (even, even) and
/// (odd, odd) sites.
pub fn is_a_site(row: usize, col: usize) -> bool {
    (row + col).is_multiple_of(2)
}

/// Checkerboard interleave of two phase channels.
pub fn double_phase_assemble(
    chan_a: &Array2<f64>,
    chan_b: &Array2<f64>,
    pitch: f64,
    wavelength: f64,
) -> Result<PhaseHologram> {
    if chan_a.dim() != chan_b.dim() {
        return Err(CghError::IncompatibleGrid(format!(
            "channel a {:?} vs channel b {:?}",
            chan_a.dim(),
            chan_b.dim()
        )));
    }
    let phase = Array2::from_shape_fn(chan_a.dim(), |(r, c)| {
        if is_a_site(r, c) {
            chan_a[(r, c)]
        } else {
            chan_b[(r, c)]
        }
    });
    PhaseHologram::new(phase, pitch, wavelength)
}

/// Adds π to every odd row, steering the modulated light away from the
/// undiffracted zero order.
pub fn apply_linear_grating(h: &PhaseHologram) -> PhaseHologram {
    let phase = Array2::from_shape_fn(h.shape(), |(r, c)| {
        let p = h.phase[(r, c)];
        if r % 2 == 1 {
            wrap_phase(p + PI)
        } else {
            p
        }
    });
    PhaseHologram {
        phase,
        pitch: h.pitch,
        wavelength: h.wavelength,
    }
}

pub fn reconstruct_stack(h: &PhaseHologram, distances: &[f64]) -> Result<Vec<Array2<f64>>> {
    let (rows, cols) = h.shape();
    let field = h.field();
    distances
        .par_iter()
        .map(|&z| {
            let p = Propagator::new(rows, cols, h.pitch, h.wavelength, z)?;
            Ok(intensity(&p.forward(&field)?))
        })
        .collect()
}

/// PSNR (peak 1) over the in-focus pixels of every plane.
pub fn masked_psnr(reconstructions: &[Array2<f64>], stack: &PlaneTargetStack) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((recon, target), mask) in reconstructions.iter().zip(&stack.targets).zip(&stack.masks) {
        Zip::from(recon)
            .and(target)
            .and(mask)
            .for_each(|&r, &t, &m| {
                if m {
                    sum += (r - t) * (r - t);
                    count += 1;
                }
            });
    }
    if count == 0 {
        return f64::INFINITY;
    }
    -10.0 * (sum / count as f64).log10()
}

/// Deterministic stand-in for a natural photograph and its depth map: smooth
/// shading, soft blobs and a few hard-edged shapes, all in `[0, 1]`.
pub fn synthetic_scene(rows: usize, cols: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = crate::seed::rng(seed, 1);
    let blobs: Vec<(f64, f64, f64, f64)> = (0..24)
        .map(|_| {
            (
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.03..0.2),
                rng.gen_range(-0.6..0.9),
            )
        })
        .collect();
    let boxes: Vec<(f64, f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            let y = rng.gen_range(0.0..0.8);
            let x = rng.gen_range(0.0..0.8);
            (
                y,
                x,
                y + rng.gen_range(0.08..0.25),
                x + rng.gen_range(0.08..0.25),
                rng.gen_range(-0.4..0.4),
            )
        })
        .collect();
    let mut image = Array2::from_shape_fn((rows, cols), |(r, c)| {
        let y = r as f64 / rows as f64;
        let x = c as f64 / cols as f64;
        let mut v = 0.35 + 0.25 * x - 0.15 * y + 0.08 * (9.0 * x + 4.0 * y).sin();
        for &(by, bx, s, a) in &blobs {
            let d2 = (x - bx).powi(2) + (y - by).powi(2);
            v += a * (-d2 / (2.0 * s * s)).exp();
        }
        for &(y0, x0, y1, x1, a) in &boxes {
            if (y0..y1).contains(&y) && (x0..x1).contains(&x) {
                v += a;
            }
        }
        v
    });
    normalize_unit(&mut image);

    let mut depth = Array2::from_shape_fn((rows, cols), |(r, c)| {
        let y = r as f64 / rows as f64;
        let x = c as f64 / cols as f64;
        let mut d = 0.7 * y + 0.3 * x;
        for &(y0, x0, y1, x1, a) in &boxes {
            if (y0..y1).contains(&y) && (x0..x1).contains(&x) {
                d -= 0.3 * a.abs();
            }
        }
        d
    });
    normalize_unit(&mut depth);
    (image, depth)
}

fn normalize_unit(grid: &mut Array2<f64>) {
    let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    grid.mapv_inplace(|v| ((v - lo) / span).clamp(0.0, 1.0));
}
