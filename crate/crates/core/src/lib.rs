//! Block-tridiagonal NEGF transport with self-consistent GW self-energies.
//!
//! The crate is organised bottom-up:
//!
//! - [`bt`] block-banded matrices and the device-to-matrix mapping,
//! - [`obc`] open boundary conditions (surface functions, Stein equations),
//! - [`rgf`] the sequential selected solver,
//! - [`dist`] the nested-dissection distributed solver and communicators,
//! - [`scba`] the G → P → W → Σ self-consistency loop and observables,
//! - [`driver`] configuration, file formats, benchmarks and oracle checks.

pub mod bt;
pub mod dist;
pub mod driver;
pub mod error;
pub mod flops;
pub mod linalg;
pub mod obc;
pub mod rgf;
pub mod scba;

pub use error::{Error, Result};
