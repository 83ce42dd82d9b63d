//! Writes a complex field to the HBGF grid format and reads it back.
//!
//! cargo run --example hbgf_roundtrip

use holosim::hbgf::{decode, encode, Dtype, Grid};
use ndarray::Array2;
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let field = Array2::from_shape_fn((3, 4), |(r, c)| Complex64::new(r as f64, -(c as f64) / 3.0));
    for dtype in [Dtype::F64, Dtype::F32] {
        let bytes = encode(&Grid::Complex(field.clone()), dtype);
        let back = decode(&bytes)?.into_complex()?;
        let err = back
            .iter()
            .zip(&field)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        println!(
            "{dtype:?}: {} bytes, header {:?}, max error {err:.1e}",
            bytes.len(),
            &bytes[..4]
        );
    }
    Ok(())
}
