//! Sancho-Rubio decimation for the surface function.

use super::ContactBlocks;
use crate::error::{Error, Result};
use crate::linalg::{inv, mm, CMat};

/// Decimation doubles the effective lead length every step, so the couplings
/// `alpha`, `beta` decay quadratically once the broadening takes effect.
/// Returns the surface function and the number of steps.
pub fn obc_sancho_rubio(c: &ContactBlocks, tol: f64, max_iter: usize) -> Result<(CMat, usize)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("Sancho-Rubio tolerance must be positive, got {tol}")));
    }
    let mut eps_s = c.m.clone();
    let mut eps = c.m.clone();
    let mut alpha = c.n.clone();
    let mut beta = c.n_prime.clone();
    let scale = c.m.norm().max(f64::MIN_POSITIVE);
    for it in 1..=max_iter {
        if alpha.norm() * beta.norm() == 0.0 {
            return Ok((inv(&eps_s, "sancho-rubio", it)?, it));
        }
        let g = inv(&eps, "sancho-rubio", it)?;
        let ag = mm(&alpha, &g);
        let bg = mm(&beta, &g);
        let agb = mm(&ag, &beta);
        eps_s -= &agb;
        eps -= agb + mm(&bg, &alpha);
        alpha = mm(&ag, &alpha);
        beta = mm(&bg, &beta);
        // The next correction to eps_s is bounded by |alpha| |g| |beta|.
        let next = alpha.norm() * beta.norm() * g.norm();
        if !next.is_finite() {
            break;
        }
        if next <= tol * tol * scale {
            let x = inv(&eps_s, "sancho-rubio", it)?;
            let res = c.residual(&x);
            log::trace!("sancho-rubio converged in {it} steps, residual {res:.2e}");
            return Ok((x, it));
        }
    }
    let x = inv(&eps_s, "sancho-rubio", max_iter)?;
    Err(Error::NotConverged {
        method: "sancho-rubio",
        iters: max_iter,
        last_update: c.residual(&x),
    })
}
