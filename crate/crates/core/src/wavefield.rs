//! Sampled complex wavefields and band-limited angular-spectrum propagation.
//!
//! DFT convention: the forward transform uses `exp(-i 2π k n / N)` and is
//! unnormalized; the inverse carries the `1/(rows·cols)` factor. Frequencies
//! are stored in standard DFT order (DC at index 0); [`fftshift`] and
//! [`ifftshift`] move between that layout and a centered one.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array2, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::WavefieldError;

type Result<T> = std::result::Result<T, WavefieldError>;

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(WavefieldError::InvalidParameter {
            name,
            reason: format!("must be finite and > 0, got {value}"),
        });
    }
    Ok(())
}

fn check_shape(rows: usize, cols: usize) -> Result<()> {
    if rows < 2 || cols < 2 {
        return Err(WavefieldError::InvalidParameter {
            name: "shape",
            reason: format!("grid must be at least 2x2, got {rows}x{cols}"),
        });
    }
    Ok(())
}

/// A complex optical field sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    data: Array2<Complex64>,
    pitch: f64,
    wavelength: f64,
}

impl ComplexField {
    pub fn new(data: Array2<Complex64>, pitch: f64, wavelength: f64) -> Result<Self> {
        let (rows, cols) = data.dim();
        check_shape(rows, cols)?;
        check_positive("pitch", pitch)?;
        check_positive("wavelength", wavelength)?;
        Ok(Self {
            data,
            pitch,
            wavelength,
        })
    }

    pub fn zeros(rows: usize, cols: usize, pitch: f64, wavelength: f64) -> Result<Self> {
        Self::new(
            Array2::from_elem((rows, cols), Complex64::new(0.0, 0.0)),
            pitch,
            wavelength,
        )
    }

    /// Unit-amplitude field `exp(i·phase)`.
    pub fn from_phase(phase: &Array2<f64>, pitch: f64, wavelength: f64) -> Result<Self> {
        Self::new(
            phase.mapv(|p| Complex64::from_polar(1.0, p)),
            pitch,
            wavelength,
        )
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.data
    }

    pub fn into_data(self) -> Array2<Complex64> {
        self.data
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Same grid parameters, new samples.
    pub fn with_data(&self, data: Array2<Complex64>) -> Result<Self> {
        if data.dim() != self.data.dim() {
            return Err(WavefieldError::IncompatibleGrid(format!(
                "shape {:?} != {:?}",
                data.dim(),
                self.data.dim()
            )));
        }
        Ok(Self {
            data,
            pitch: self.pitch,
            wavelength: self.wavelength,
        })
    }
}

/// Elementwise `|u|²`.
pub fn intensity(field: &ComplexField) -> Array2<f64> {
    field.data.mapv(|c| c.norm_sqr())
}

/// Sum of the intensity over all pixels.
pub fn field_energy(field: &ComplexField) -> f64 {
    field.data.iter().map(|c| c.norm_sqr()).sum()
}

/// Spatial frequency (cycles per meter) of DFT bin `index` in an `n`-point
/// transform with sample spacing `pitch`.
pub fn frequency(index: usize, n: usize, pitch: f64) -> f64 {
    let signed = if index < n.div_ceil(2) {
        index as f64
    } else {
        index as f64 - n as f64
    };
    signed / (n as f64 * pitch)
}

/// Moves the DC bin to the center of the grid.
pub fn fftshift<T: Clone>(grid: &Array2<T>) -> Array2<T> {
    let (rows, cols) = grid.dim();
    roll(grid, rows / 2, cols / 2)
}

/// Inverse of [`fftshift`].
pub fn ifftshift<T: Clone>(grid: &Array2<T>) -> Array2<T> {
    let (rows, cols) = grid.dim();
    roll(grid, rows.div_ceil(2), cols.div_ceil(2))
}

fn roll<T: Clone>(grid: &Array2<T>, dr: usize, dc: usize) -> Array2<T> {
    let (rows, cols) = grid.dim();
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        grid[((r + rows - dr) % rows, (c + cols - dc) % cols)].clone()
    })
}

/// Planned 2D FFT for one grid shape.
#[derive(Clone)]
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.transform(data, &self.row_fwd, &self.col_fwd);
    }

    /// Inverse transform including the `1/(rows·cols)` normalization.
    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.transform(data, &self.row_inv, &self.col_inv);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        data.mapv_inplace(|c| c * scale);
    }

    fn transform(
        &self,
        data: &mut Array2<Complex64>,
        row_plan: &Arc<dyn Fft<f64>>,
        col_plan: &Arc<dyn Fft<f64>>,
    ) {
        assert_eq!(
            data.dim(),
            (self.rows, self.cols),
            "FFT plan shape mismatch"
        );
        if !data.is_standard_layout() {
            *data = data.as_standard_layout().to_owned();
        }
        let flat = data.as_slice_mut().expect("standard layout");
        row_plan.process(flat);

        let mut column = vec![Complex64::new(0.0, 0.0); self.rows];
        let mut scratch = vec![Complex64::new(0.0, 0.0); col_plan.get_inplace_scratch_len()];
        for c in 0..self.cols {
            for r in 0..self.rows {
                column[r] = flat[r * self.cols + c];
            }
            col_plan.process_with_scratch(&mut column, &mut scratch);
            for r in 0..self.rows {
                flat[r * self.cols + c] = column[r];
            }
        }
    }
}

/// Band-limited angular-spectrum transfer function for one propagation
/// distance.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationKernel {
    transfer: Array2<Complex64>,
    band_mask: Array2<bool>,
    distance: f64,
    pitch: f64,
    wavelength: f64,
}

impl PropagationKernel {
    pub fn transfer(&self) -> &Array2<Complex64> {
        &self.transfer
    }

    pub fn band_mask(&self) -> &Array2<bool> {
        &self.band_mask
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn shape(&self) -> (usize, usize) {
        self.transfer.dim()
    }

    /// Kernel of the adjoint operator (propagation by `-distance`).
    pub fn conjugate(&self) -> Self {
        Self {
            transfer: self.transfer.mapv(|c| c.conj()),
            band_mask: self.band_mask.clone(),
            distance: -self.distance,
            pitch: self.pitch,
            wavelength: self.wavelength,
        }
    }

    fn check_compatible(&self, field: &ComplexField) -> Result<()> {
        if field.data.dim() != self.transfer.dim() {
            return Err(WavefieldError::IncompatibleGrid(format!(
                "field shape {:?} != kernel shape {:?}",
                field.data.dim(),
                self.transfer.dim()
            )));
        }
        if field.pitch != self.pitch {
            return Err(WavefieldError::IncompatibleGrid(format!(
                "field pitch {} != kernel pitch {}",
                field.pitch, self.pitch
            )));
        }
        if field.wavelength != self.wavelength {
            return Err(WavefieldError::IncompatibleGrid(format!(
                "field wavelength {} != kernel wavelength {}",
                field.wavelength, self.wavelength
            )));
        }
        Ok(())
    }
}

/// Band limit `1/(λ·sqrt((2z/L)² + 1))` for an aperture of extent `L`.
fn band_limit(distance: f64, extent: f64, wavelength: f64) -> f64 {
    let w = 2.0 * distance / extent;
    1.0 / (wavelength * (w * w + 1.0).sqrt())
}

pub fn build_kernel(
    rows: usize,
    cols: usize,
    pitch: f64,
    wavelength: f64,
    distance: f64,
) -> Result<PropagationKernel> {
    check_shape(rows, cols)?;
    check_positive("pitch", pitch)?;
    check_positive("wavelength", wavelength)?;
    if !distance.is_finite() {
        return Err(WavefieldError::InvalidParameter {
            name: "distance",
            reason: format!("must be finite, got {distance}"),
        });
    }

    let fx_limit = band_limit(distance.abs(), cols as f64 * pitch, wavelength);
    let fy_limit = band_limit(distance.abs(), rows as f64 * pitch, wavelength);
    let inv_lambda_sq = 1.0 / (wavelength * wavelength);

    let mut band_mask = Array2::from_elem((rows, cols), false);
    let mut transfer = Array2::from_elem((rows, cols), Complex64::new(0.0, 0.0));
    for r in 0..rows {
        let fy = frequency(r, rows, pitch);
        for c in 0..cols {
            let fx = frequency(c, cols, pitch);
            let radial = inv_lambda_sq - fx * fx - fy * fy;
            if radial > 0.0 && fx.abs() <= fx_limit && fy.abs() <= fy_limit {
                band_mask[(r, c)] = true;
                let phase = 2.0 * PI * distance * radial.sqrt();
                transfer[(r, c)] = Complex64::new(phase.cos(), phase.sin());
            }
        }
    }

    Ok(PropagationKernel {
        transfer,
        band_mask,
        distance,
        pitch,
        wavelength,
    })
}

/// `IDFT(DFT(field) ⊙ transfer)`.
pub fn propagate(field: &ComplexField, kernel: &PropagationKernel) -> Result<ComplexField> {
    kernel.check_compatible(field)?;
    let fft = Fft2::new(field.rows(), field.cols());
    Ok(apply_kernel(field, kernel, &fft))
}

fn apply_kernel(field: &ComplexField, kernel: &PropagationKernel, fft: &Fft2) -> ComplexField {
    let mut spectrum = field.data.clone();
    fft.forward(&mut spectrum);
    Zip::from(&mut spectrum)
        .and(&kernel.transfer)
        .for_each(|s, &h| *s *= h);
    fft.inverse(&mut spectrum);
    ComplexField {
        data: spectrum,
        pitch: field.pitch,
        wavelength: field.wavelength,
    }
}

/// Propagation with 2× zero padding to suppress circular wraparound. The
/// field sits in the top-left quadrant of the padded grid and the same
/// region is cropped back out.
pub fn propagate_padded(field: &ComplexField, distance: f64) -> Result<ComplexField> {
    let (rows, cols) = field.data.dim();
    let kernel = build_kernel(2 * rows, 2 * cols, field.pitch, field.wavelength, distance)?;
    let mut padded = Array2::from_elem((2 * rows, 2 * cols), Complex64::new(0.0, 0.0));
    padded.slice_mut(s![..rows, ..cols]).assign(&field.data);
    let big = ComplexField {
        data: padded,
        pitch: field.pitch,
        wavelength: field.wavelength,
    };
    let out = propagate(&big, &kernel)?;
    field.with_data(out.data.slice(s![..rows, ..cols]).to_owned())
}

/// A kernel bundled with a reusable FFT plan, for repeated forward and
/// adjoint propagation over one distance.
#[derive(Debug, Clone)]
pub struct Propagator {
    kernel: PropagationKernel,
    adjoint: PropagationKernel,
    fft: Fft2,
}

impl Propagator {
    pub fn new(
        rows: usize,
        cols: usize,
        pitch: f64,
        wavelength: f64,
        distance: f64,
    ) -> Result<Self> {
        let kernel = build_kernel(rows, cols, pitch, wavelength, distance)?;
        let adjoint = kernel.conjugate();
        Ok(Self {
            kernel,
            adjoint,
            fft: Fft2::new(rows, cols),
        })
    }

    pub fn kernel(&self) -> &PropagationKernel {
        &self.kernel
    }

    pub fn forward(&self, field: &ComplexField) -> Result<ComplexField> {
        self.kernel.check_compatible(field)?;
        Ok(apply_kernel(field, &self.kernel, &self.fft))
    }

    pub fn adjoint(&self, field: &ComplexField) -> Result<ComplexField> {
        self.adjoint.check_compatible(field)?;
        Ok(apply_kernel(field, &self.adjoint, &self.fft))
    }
}
