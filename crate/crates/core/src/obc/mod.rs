//! Open boundary conditions.
//!
//! A semi-infinite lead seen from the device boundary is described by
//! [`ContactBlocks`]: the lead cell diagonal block `m` and the couplings
//! `n` (towards the next lead cell, away from the device) and `n'` (back).
//! Its surface function solves `x = (m - n x n')^{-1}` and the boundary
//! self-energy is `n x n'`.

pub mod beyn;
pub mod fdt;
pub mod fixed_point;
pub mod lyapunov;
pub mod memo;
pub mod sancho;

use crate::bt::device::Subsystem;
use crate::bt::BlockMatrix;
use crate::error::{Error, Result};
use crate::linalg::{eye, frob, mm, mm3, CMat};

pub use beyn::{obc_beyn, obc_beyn_blocks, BeynParams, BeynResult};
pub use fdt::{fermi, sigma_lg_obc};
pub use fixed_point::{obc_fixed_point, FixedPointResult};
pub use lyapunov::{lead_lesser, lyapunov_solve, stein_solve, LeadLesserTerms, LyapunovMethod};
pub use memo::{CacheKey, Kind, MemoStats, RetardedSurface, SteinSurface, SurfaceCache, SurfaceProblem};
pub use sancho::obc_sancho_rubio;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug)]
pub struct ContactBlocks {
    pub m: CMat,
    pub n: CMat,
    pub n_prime: CMat,
    pub side: Side,
    pub subsystem: Subsystem,
}

impl ContactBlocks {
    pub fn new(m: CMat, n: CMat, n_prime: CMat, side: Side, subsystem: Subsystem) -> Result<Self> {
        if m.shape() != n.shape() || m.shape() != n_prime.shape() || m.nrows() != m.ncols() {
            return Err(Error::Shape(format!(
                "contact blocks {:?}, {:?}, {:?}",
                m.shape(),
                n.shape(),
                n_prime.shape()
            )));
        }
        Ok(ContactBlocks { m, n, n_prime, side, subsystem })
    }

    /// Lead blocks taken from the boundary cells of a block-tridiagonal
    /// system matrix, assuming the lead continues the boundary cell periodically.
    pub fn from_system(m_tilde: &BlockMatrix, side: Side, subsystem: Subsystem) -> Result<Self> {
        let nb = m_tilde.n_blocks();
        if nb < 2 {
            return Err(Error::Shape("lead extraction needs at least two blocks".into()));
        }
        let (m, n, n_prime) = match side {
            Side::Left => (m_tilde.block(0, 0), m_tilde.block(1, 0), m_tilde.block(0, 1)),
            Side::Right => (
                m_tilde.block(nb - 1, nb - 1),
                m_tilde.block(nb - 2, nb - 1),
                m_tilde.block(nb - 1, nb - 2),
            ),
        };
        Self::new(m, n, n_prime, side, subsystem)
    }

    pub fn size(&self) -> usize {
        self.m.nrows()
    }

    /// `m - n x n'`
    pub fn schur(&self, x: &CMat) -> CMat {
        &self.m - mm3(&self.n, x, &self.n_prime)
    }

    /// Boundary self-energy `n x n'`.
    pub fn self_energy(&self, x: &CMat) -> CMat {
        mm3(&self.n, x, &self.n_prime)
    }

    /// `||(m - n x n') x - I||_F / sqrt(N)`, the defining-equation residual.
    pub fn residual(&self, x: &CMat) -> f64 {
        let n = self.size();
        frob(&(mm(&self.schur(x), x) - eye(n))) / (n as f64).sqrt()
    }
}

/// Solver used for the retarded surface function when no cached value helps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetardedMethod {
    Beyn,
    Sancho,
    FixedPoint,
}

/// Surface function by the chosen method.
pub fn solve_retarded(c: &ContactBlocks, method: RetardedMethod, beyn: &BeynParams) -> Result<CMat> {
    match method {
        RetardedMethod::Beyn => Ok(obc_beyn(c, beyn)?.x),
        RetardedMethod::Sancho => Ok(obc_sancho_rubio(c, 1e-12, 200)?.0),
        RetardedMethod::FixedPoint => {
            let r = obc_fixed_point(c, &CMat::zeros(c.size(), c.size()), 100_000, 1e-13)?;
            if !r.converged {
                return Err(Error::NotConverged {
                    method: "obc fixed point",
                    iters: r.iters,
                    last_update: r.last_update,
                });
            }
            Ok(r.x)
        }
    }
}

/// Small leads with known behaviour, for tests and oracles.
pub mod testing {
    use super::*;
    use crate::linalg::{c64, random_cmat, random_hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A lead `m = (E + i eta) I - h0`, `n = -h1^H`, `n' = -h1` with random
    /// Hermitian `h0` and random `h1`.
    pub fn random_lead(seed: u64, n: usize, energy: f64, eta: f64, coupling: f64) -> ContactBlocks {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h0 = random_hermitian(&mut rng, n);
        let h1 = random_cmat(&mut rng, n, n) * c64(coupling, 0.0);
        let m = eye(n) * c64(energy, eta) - h0;
        ContactBlocks::new(m, -h1.adjoint(), -h1, Side::Left, Subsystem::G).unwrap()
    }

    /// Scalar chain `m = z`, `n = n' = t`.
    pub fn chain(z: crate::linalg::C64, t: f64) -> ContactBlocks {
        let one = |v| CMat::from_element(1, 1, v);
        ContactBlocks::new(one(z), one(c64(t, 0.0)), one(c64(t, 0.0)), Side::Left, Subsystem::G).unwrap()
    }

    /// Decaying closed-form root of `t^2 x^2 - z x + 1 = 0`.
    pub fn chain_surface(z: crate::linalg::C64, t: f64) -> crate::linalg::C64 {
        let s = (z * z - 4.0 * t * t).sqrt();
        let a = (z + s) / (2.0 * t * t);
        let b = (z - s) / (2.0 * t * t);
        if (a * t).norm() < 1.0 {
            a
        } else {
            b
        }
    }
}
