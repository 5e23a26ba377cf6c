//! Self-consistent Born approximation for the GW self-energy.
//!
//! One iteration solves the electron system `G`, forms the polarization `P`
//! by energy correlation, solves the screened interaction `W`, and forms the
//! self-energy `Σ` by energy convolution, which is mixed into the next
//! electron system.

pub mod assemble;
pub mod convolve;
pub mod layout;
pub mod observables;
pub mod run;
pub mod selfenergy;

/// Prefactor of the polarization correlation, `-i / 2π`.
pub const C_P: crate::linalg::C64 = crate::linalg::C64::new(0.0, -1.0 / (2.0 * std::f64::consts::PI));
/// Prefactor of the self-energy convolution, `i / 2π`.
pub const C_SIGMA: crate::linalg::C64 = crate::linalg::C64::new(0.0, 1.0 / (2.0 * std::f64::consts::PI));
/// Prefactor of the bond current (one spin channel), `1 / 2π`.
pub const C_I: f64 = 1.0 / (2.0 * std::f64::consts::PI);
