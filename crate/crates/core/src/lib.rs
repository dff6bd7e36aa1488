//! Photoelectron momentum distributions and quantum vortices for a 2D hydrogen
//! atom ionized by a short, hard-windowed cosine pulse.
//!
//! The pipeline is
//! [`pulse`] → [`amplitudes`] → [`wavefield`] → [`currents`] → [`vortex_detect`],
//! with [`tdse_oracle`] integrating the full truncated channel system as an
//! independent check on the perturbative amplitudes. [`config`] and [`export`]
//! carry the file formats used by the `vortexscope` binary.

pub mod amplitudes;
pub mod cli;
pub mod config;
pub mod currents;
pub mod error;
pub mod export;
pub mod pulse;
pub mod quadrature;
pub mod tdse_oracle;
pub mod vortex_detect;
pub mod wavefield;

pub use error::{Error, Result};

/// Complex double used throughout.
pub type C64 = num_complex::Complex64;

/// Header line carried by every text file this crate writes.
pub const FORMAT_HEADER: &str = "# vortexscope-format 1";

/// Wraps an angle into (−π, π].
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut y = x % TAU;
    if y > PI {
        y -= TAU;
    } else if y <= -PI {
        y += TAU;
    }
    y
}
