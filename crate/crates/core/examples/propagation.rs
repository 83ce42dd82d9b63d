//! Band-limited angular-spectrum propagation of a square aperture, with the
//! round trip back to the source plane.
//!
//! cargo run --release --example propagation

use holosim::wavefield::{build_kernel, field_energy, intensity, propagate, ComplexField};
use ndarray::Array2;
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, pitch, wavelength) = (256, 8e-6, 532e-9);
    let aperture = Array2::from_shape_fn((n, n), |(r, c)| {
        let inside = r.abs_diff(n / 2) < 16 && c.abs_diff(n / 2) < 16;
        Complex64::new(if inside { 1.0 } else { 0.0 }, 0.0)
    });
    let field = ComplexField::new(aperture, pitch, wavelength)?;
    for z_mm in [1.0, 5.0, 20.0] {
        let z = z_mm * 1e-3;
        let out = propagate(&field, &build_kernel(n, n, pitch, wavelength, z)?)?;
        let back = propagate(&out, &build_kernel(n, n, pitch, wavelength, -z)?)?;
        let err: f64 = back
            .data()
            .iter()
            .zip(field.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let peak = intensity(&out).iter().cloned().fold(0.0, f64::max);
        println!(
            "z = {z_mm:>4} mm: energy {:.3} (input {:.3}), peak {:.3}, round-trip error {err:.2e}",
            field_energy(&out),
            field_energy(&field),
            peak
        );
    }
    Ok(())
}
