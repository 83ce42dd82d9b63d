//! Simulation toolkit for holographic near-eye display experiments.
//!
//! * [`wavefield`]: complex fields and band-limited angular-spectrum propagation.
//! * [`cgh`]: multiplane phase-only hologram optimization, double-phase
//!   encoding and the row-alternating phase grating.
//! * [`kogelnik`]: volume-grating recording, k-vector closure replay and
//!   coupled-wave diffraction efficiency.
//! * [`raytrace`]: point source → HOE eyepiece → thin-lens eye ray tracing.
//! * [`sweep`]: eyebox and head misalignment sweeps.
//! * [`cli`]: JSON experiment configs, command dispatch and artifact writing.

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cgh;
pub mod cli;
pub mod error;
pub mod hbgf;
pub mod kogelnik;
pub mod raytrace;
pub mod seed;
pub mod sweep;
pub mod wavefield;

pub use error::{Error, Result};
