//! Optimizer and propagation checks against independent oracles.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;

use holosim::cgh::{
    double_phase_assemble, is_a_site, loss_and_gradient, optimize_multiplane_phase,
    reconstruct_stack, OptimizerConfig, PhaseHologram, PlaneTargetStack,
};
use holosim::seed;
use holosim::wavefield::{build_kernel, field_energy, frequency, propagate, ComplexField};

const PITCH: f64 = 8e-6;
const LAMBDA: f64 = 532e-9;

fn full_mask_stack(
    targets: Vec<Array2<f64>>,
    distances: Vec<f64>,
    weights: Vec<f64>,
) -> PlaneTargetStack {
    let masks = targets.iter().map(|t| t.mapv(|_| true)).collect();
    PlaneTargetStack::new(targets, masks, distances, weights).unwrap()
}

#[test]
fn gradient_matches_finite_differences_with_weights() {
    let mut rng = seed::rng(21, 0);
    let n = 16;
    let targets: Vec<Array2<f64>> = (0..3)
        .map(|_| Array2::from_shape_fn((n, n), |_| rng.gen::<f64>()))
        .collect();
    let masks: Vec<Array2<bool>> = (0..3)
        .map(|_| Array2::from_shape_fn((n, n), |_| rng.gen::<f64>() < 0.6))
        .collect();
    let stack = PlaneTargetStack::new(
        targets,
        masks,
        vec![0.5e-3, 1.0e-3, 2.5e-3],
        vec![1.0, 0.3, 2.0],
    )
    .unwrap();
    let h = PhaseHologram::random(n, n, PITCH, LAMBDA, 8).unwrap();
    let (_, grad) = loss_and_gradient(&h, &stack).unwrap();
    let eps = 1e-5;
    for _ in 0..40 {
        let (r, c) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let at = |d: f64| {
            let mut p = h.phase().clone();
            p[(r, c)] += d;
            loss_and_gradient(&PhaseHologram::new(p, PITCH, LAMBDA).unwrap(), &stack)
                .unwrap()
                .0
        };
        let fd = (at(eps) - at(-eps)) / (2.0 * eps);
        let an = grad[(r, c)];
        assert!(
            (fd - an).abs() <= 1e-4 * an.abs().max(fd.abs()).max(1e-3),
            "pixel ({r},{c}): fd {fd} vs analytic {an}"
        );
    }
}

#[test]
fn recovers_a_self_consistent_target() {
    let n = 32;
    // Widely spaced planes give the phase retrieval enough diversity for plain
    // descent to escape the shallow minima it finds with 1 mm spacing.
    let distances = vec![2e-3, 12e-3];
    let known = PhaseHologram::random(n, n, PITCH, LAMBDA, 1234).unwrap();
    let targets = reconstruct_stack(&known, &distances).unwrap();
    let stack = full_mask_stack(targets, distances, vec![1.0, 1.0]);
    let config = OptimizerConfig {
        iterations: 2000,
        step_size: 0.05,
        seed: 99,
        ..OptimizerConfig::default()
    };
    let result = optimize_multiplane_phase(&stack, &config, PITCH, LAMBDA).unwrap();
    assert!(
        result.final_loss <= 0.01 * result.initial_loss,
        "{} -> {}",
        result.initial_loss,
        result.final_loss
    );
}

#[test]
fn reconstruction_reproduces_reported_loss() {
    let n = 24;
    let mut rng = seed::rng(5, 0);
    let targets: Vec<Array2<f64>> = (0..2)
        .map(|_| Array2::from_shape_fn((n, n), |_| rng.gen::<f64>()))
        .collect();
    let distances = vec![1e-3, 2e-3];
    let stack = full_mask_stack(targets.clone(), distances.clone(), vec![1.0, 1.0]);
    let config = OptimizerConfig {
        iterations: 15,
        step_size: 0.02,
        ..OptimizerConfig::default()
    };
    let result = optimize_multiplane_phase(&stack, &config, PITCH, LAMBDA).unwrap();
    let recon = reconstruct_stack(&result.hologram, &distances).unwrap();
    let loss: f64 = recon
        .iter()
        .zip(&targets)
        .map(|(r, t)| r.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum();
    assert!((loss - result.final_loss).abs() <= 1e-9 * result.final_loss);
    assert_eq!(result.trace.last().unwrap(), &(15, result.final_loss));
    assert_eq!(result.trace[0], (0, result.initial_loss));
}

#[test]
fn same_seed_same_hologram() {
    let n = 16;
    let distances = vec![1e-3];
    let known = PhaseHologram::random(n, n, PITCH, LAMBDA, 1).unwrap();
    let stack = full_mask_stack(
        reconstruct_stack(&known, &distances).unwrap(),
        distances,
        vec![1.0],
    );
    let config = OptimizerConfig {
        iterations: 10,
        step_size: 0.02,
        seed: 3,
        ..OptimizerConfig::default()
    };
    let a = optimize_multiplane_phase(&stack, &config, PITCH, LAMBDA).unwrap();
    let b = optimize_multiplane_phase(&stack, &config, PITCH, LAMBDA).unwrap();
    assert_eq!(a, b);
    assert!(a.hologram.phase().iter().all(|p| (-PI..PI).contains(p)));
}

#[test]
fn checkerboard_deinterleave_is_exact() {
    let mut rng = seed::rng(6, 0);
    let a = Array2::from_shape_fn((7, 9), |_| rng.gen_range(-PI..PI));
    let b = Array2::from_shape_fn((7, 9), |_| rng.gen_range(-PI..PI));
    let h = double_phase_assemble(&a, &b, PITCH, LAMBDA).unwrap();
    for ((r, c), &v) in h.phase().indexed_iter() {
        let expected = if is_a_site(r, c) {
            a[(r, c)]
        } else {
            b[(r, c)]
        };
        assert_eq!(v, expected);
    }
}

/// Output energy by Parseval on a naive double-sum DFT of the input times the
/// transfer function.
#[test]
fn propagated_energy_matches_direct_parseval() {
    let n = 32;
    let z = 1.5e-3;
    let kernel = build_kernel(n, n, PITCH, LAMBDA, z).unwrap();
    let mut rng = seed::rng(7, 0);
    let data = Array2::from_shape_fn((n, n), |_| Complex64::new(rng.gen(), rng.gen()));
    let field = ComplexField::new(data.clone(), PITCH, LAMBDA).unwrap();

    let mut oracle = 0.0;
    for ky in 0..n {
        for kx in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for y in 0..n {
                for x in 0..n {
                    let arg = -2.0 * PI * ((kx * x) as f64 / n as f64 + (ky * y) as f64 / n as f64);
                    acc += data[(y, x)] * Complex64::from_polar(1.0, arg);
                }
            }
            // Independent transfer: exp(i2πz·sqrt(1/λ² − fx² − fy²)) where in band.
            let (fx, fy) = (frequency(kx, n, PITCH), frequency(ky, n, PITCH));
            let arg = 1.0 / (LAMBDA * LAMBDA) - fx * fx - fy * fy;
            if kernel.band_mask()[(ky, kx)] && arg > 0.0 {
                oracle += acc.norm_sqr();
            }
        }
    }
    oracle /= (n * n) as f64;
    let out = propagate(&field, &kernel).unwrap();
    let energy = field_energy(&out);
    assert!(
        (energy - oracle).abs() <= 1e-9 * oracle,
        "{energy} vs {oracle}"
    );
}

#[test]
fn reconstructed_planes_conserve_hologram_energy() {
    let n = 64;
    let h = PhaseHologram::random(n, n, PITCH, LAMBDA, 17).unwrap();
    // At this pitch and distance the band limit lies beyond Nyquist, so
    // every frequency is kept.
    let kernel = build_kernel(n, n, PITCH, LAMBDA, 1e-3).unwrap();
    assert!(kernel.band_mask().iter().all(|&k| k));
    let recon = reconstruct_stack(&h, &[1e-3, 2e-3, -1e-3]).unwrap();
    for plane in recon {
        let e: f64 = plane.sum();
        assert!((e - (n * n) as f64).abs() <= 1e-6 * (n * n) as f64);
    }
}
