//! Double-phase encoding of a back-propagated image, with and without the
//! row-alternating grating that pushes light away from the zero order.
//!
//! cargo run --release --example double_phase

use holosim::cgh::{
    apply_linear_grating, complex_to_double_phase, double_phase_assemble, reconstruct_stack,
    synthetic_scene,
};
use holosim::wavefield::{propagate_padded, ComplexField, Fft2};
use num_complex::Complex64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (n, pitch, wavelength, z) = (256, 3.74e-6, 532e-9, 2e-3);
    let (image, _) = synthetic_scene(n, n, 0);
    let target = ComplexField::new(
        image.mapv(|v| Complex64::new(v.sqrt(), 0.0)),
        pitch,
        wavelength,
    )?;
    let slm = propagate_padded(&target, -z)?;
    let a_max = slm.data().iter().map(|c| c.norm()).fold(0.0, f64::max);
    let (a, b) = complex_to_double_phase(&slm, a_max)?;
    let plain = double_phase_assemble(&a, &b, pitch, wavelength)?;
    let grated = apply_linear_grating(&plain);

    let fft = Fft2::new(n, n);
    for (name, h) in [("double phase", &plain), ("with grating", &grated)] {
        let mut spectrum = h.field().into_data();
        fft.forward(&mut spectrum);
        let total: f64 = spectrum.iter().map(|c| c.norm_sqr()).sum();
        let recon = reconstruct_stack(h, &[z])?.remove(0);
        // The grating steers the replay by z·λ/(2·pitch) along the rows, so the
        // unshifted correlation collapses even though the image is intact.
        let corr = correlation(recon.iter(), image.iter());
        println!(
            "{name:>12}: DC share {:.2e}, correlation with target {corr:.3}",
            spectrum[(0, 0)].norm_sqr() / total
        );
    }
    Ok(())
}

fn correlation<'a>(x: impl Iterator<Item = &'a f64>, y: impl Iterator<Item = &'a f64>) -> f64 {
    let pairs: Vec<(f64, f64)> = x.copied().zip(y.copied()).collect();
    let n = pairs.len() as f64;
    let (mx, my) = pairs
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}
