//! Plain fixed-point iteration of the surface recursion.

use super::ContactBlocks;
use crate::error::{Error, Result};
use crate::linalg::{inv, CMat};

#[derive(Clone, Debug)]
pub struct FixedPointResult {
    pub x: CMat,
    pub iters: usize,
    pub converged: bool,
    /// Relative change of the last step.
    pub last_update: f64,
}

/// Iterates `x_{i+1} = (m - n x_i n')^{-1}` from `x0`.
///
/// Converged once `||x_{i+1} - x_i||_F / ||x_{i+1}||_F < tol`. Non-convergence
/// is reported through the flag, not as an error; a singular iterate is an
/// error carrying the iteration index.
pub fn obc_fixed_point(c: &ContactBlocks, x0: &CMat, max_iter: usize, tol: f64) -> Result<FixedPointResult> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("fixed point tolerance must be positive, got {tol}")));
    }
    if c.n.iter().all(|z| *z == num_complex::Complex64::new(0.0, 0.0)) {
        let x = inv(&c.m, "obc fixed point", 1)?;
        return Ok(FixedPointResult { x, iters: 1, converged: true, last_update: 0.0 });
    }
    let mut x = x0.clone();
    let mut last_update = f64::INFINITY;
    for it in 1..=max_iter {
        let next = inv(&c.schur(&x), "obc fixed point", it)?;
        let nrm = next.norm();
        last_update = if nrm > 0.0 { (&next - &x).norm() / nrm } else { 0.0 };
        x = next;
        if !last_update.is_finite() {
            return Err(Error::NotConverged { method: "obc fixed point", iters: it, last_update });
        }
        if last_update < tol {
            return Ok(FixedPointResult { x, iters: it, converged: true, last_update });
        }
    }
    Ok(FixedPointResult { x, iters: max_iter, converged: false, last_update })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, rel_err, zeros};
    use crate::obc::testing::*;

    #[test]
    fn decoupled_lead_is_one_inverse() {
        let mut c = random_lead(1, 3, 0.2, 0.1, 0.0);
        c.n = zeros(3, 3);
        let r = obc_fixed_point(&c, &zeros(3, 3), 10, 1e-12).unwrap();
        assert_eq!(r.iters, 1);
        assert!(rel_err(&r.x, &c.m.clone().try_inverse().unwrap()) < 1e-14);
    }

    #[test]
    fn scalar_quadratic_root() {
        // x = 1 / (2 - x / 4)  =>  x^2 - 8x + 4 = 0, stable root 4 - 2 sqrt(3).
        let c = chain(c64(2.0, 0.0), 0.5);
        let r = obc_fixed_point(&c, &zeros(1, 1), 200, 1e-14).unwrap();
        assert!(r.converged);
        assert!((r.x[(0, 0)] - c64(4.0 - 2.0 * 3f64.sqrt(), 0.0)).norm() < 1e-12);
    }

    #[test]
    fn warm_start_at_solution() {
        let c = chain(c64(2.0, 0.0), 0.5);
        let exact = CMat::from_element(1, 1, c64(4.0 - 2.0 * 3f64.sqrt(), 0.0));
        let r = obc_fixed_point(&c, &exact, 10, 1e-12).unwrap();
        assert!(r.converged && r.iters <= 1);
    }

    #[test]
    fn reports_non_convergence() {
        let c = random_lead(2, 3, 0.0, 1e-3, 1.0);
        let r = obc_fixed_point(&c, &zeros(3, 3), 3, 1e-14).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iters, 3);
        assert!(obc_fixed_point(&c, &zeros(3, 3), 3, 0.0).is_err());
    }
}
