//! Discrete-time Lyapunov (Stein) equations `w = q + s a w a^H`, `s = ±1`.
//!
//! The boundary lesser/greater problem is usually quoted as
//! `w = q - a w a^H`; the lead recursion used for the screened interaction
//! needs the `+` form. Both share the solvers below.

use super::ContactBlocks;
use crate::error::{Error, Result};
use crate::flops;
use crate::linalg::{adj, eig, eye, inv_with_pivot_ratio, kron, mm, mm3, solve, unvec, vec_of, CMat, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovMethod {
    Doubling,
    EigenDirect,
    KronOracle,
}

/// Spectral radius estimate `||a^(2^k)||^(1/2^k)` with normalisation at every
/// squaring to avoid overflow.
pub fn spectral_radius_estimate(a: &CMat) -> f64 {
    let mut b = a.clone();
    let mut log_scale = 0.0f64;
    let mut power = 1.0f64;
    for _ in 0..12 {
        let nrm = b.norm();
        if nrm == 0.0 {
            return 0.0;
        }
        b /= C64::new(nrm, 0.0);
        log_scale += nrm.ln() / power;
        b = mm(&b, &b);
        power *= 2.0;
    }
    let nrm = b.norm();
    if nrm == 0.0 {
        return 0.0;
    }
    (log_scale + nrm.ln() / power).exp()
}

/// Solves `w = q + sign * a w a^H`.
pub fn stein_solve(a: &CMat, q: &CMat, sign: f64, method: LyapunovMethod, tol: f64) -> Result<CMat> {
    if a.shape() != q.shape() || a.nrows() != a.ncols() {
        return Err(Error::Shape(format!("stein: a {:?}, q {:?}", a.shape(), q.shape())));
    }
    match method {
        LyapunovMethod::Doubling => doubling(a, q, sign, tol),
        LyapunovMethod::EigenDirect => eigen_direct(a, q, sign),
        LyapunovMethod::KronOracle => kron_oracle(a, q, sign),
    }
}

/// Solves `w = q - a w a^H`.
pub fn lyapunov_solve(a: &CMat, q: &CMat, method: LyapunovMethod, tol: f64) -> Result<CMat> {
    stein_solve(a, q, -1.0, method, tol)
}

fn doubling(a: &CMat, q: &CMat, sign: f64, tol: f64) -> Result<CMat> {
    let rho = spectral_radius_estimate(a);
    if rho >= 1.0 {
        return Err(Error::SpectralRadius { rho });
    }
    let s = C64::new(sign, 0.0);
    let mut w = q + mm3(a, q, &adj(a)) * s;
    let mut ak = mm(a, a);
    for it in 0..64 {
        let upd = mm3(&ak, &w, &adj(&ak));
        let un = upd.norm();
        w += upd;
        if un <= tol * w.norm() || un == 0.0 {
            return Ok(w);
        }
        ak = mm(&ak, &ak);
        if !ak.norm().is_finite() {
            return Err(Error::NotConverged { method: "lyapunov doubling", iters: it, last_update: un });
        }
    }
    Err(Error::NotConverged { method: "lyapunov doubling", iters: 64, last_update: f64::NAN })
}

fn eigen_direct(a: &CMat, q: &CMat, sign: f64) -> Result<CMat> {
    let n = a.nrows();
    let (lambda, t) = eig(a);
    let Some((t_inv, ratio)) = inv_with_pivot_ratio(&t) else {
        log::warn!("lyapunov eigen_direct: eigenvector matrix singular, using the Kronecker solve");
        return kron_oracle(a, q, sign);
    };
    if ratio < 1e-10 {
        log::warn!("lyapunov eigen_direct: near-defective a (pivot ratio {ratio:.1e}), using the Kronecker solve");
        return kron_oracle(a, q, sign);
    }
    let mut qt = mm3(&t_inv, q, &adj(&t_inv));
    for i in 0..n {
        for j in 0..n {
            let d = C64::new(1.0, 0.0) - lambda[i] * lambda[j].conj() * sign;
            if d.norm() < 1e-14 {
                return Err(Error::Singular { context: "lyapunov eigen_direct", step: i * n + j });
            }
            qt[(i, j)] /= d;
        }
    }
    Ok(mm3(&t, &qt, &adj(&t)))
}

/// Dense solve of `(I - sign conj(a) ⊗ a) vec w = vec q`.
fn kron_oracle(a: &CMat, q: &CMat, sign: f64) -> Result<CMat> {
    let n = a.nrows();
    flops::add(flops::gemm(n * n, 1, n * n));
    let k = eye(n * n) - kron(&a.map(|z| z.conj()), a) * C64::new(sign, 0.0);
    let v = solve(&k, &vec_of(q), "lyapunov kronecker", 0)?;
    Ok(unvec(&v, n, n))
}

/// Lesser/greater surface function of a lead and the boundary term it adds
/// to the right-hand side of the device system.
///
/// With the retarded surface function `x`, the lead cell right-hand side
/// block `b0` and the coupling block `bc` from the lead cell towards the
/// device, the surface function obeys `w = q + a w a^H` with `a = x n`,
/// `q = x (b0 - (y - y^H)) x^H` and `y = n x bc`. The device boundary block
/// receives `n w n^H - (y - y^H)`.
pub fn lead_lesser(c: &ContactBlocks, x: &CMat, b0: &CMat, bc: &CMat, method: LyapunovMethod, tol: f64) -> Result<(CMat, CMat)> {
    let t = LeadLesserTerms::new(c, x, b0, bc);
    let w = stein_solve(&t.a, &t.q, 1.0, method, tol)?;
    let boundary = t.boundary(c, &w);
    Ok((w, boundary))
}

/// The pieces of [`lead_lesser`] around the Stein solve, so the solve can be
/// memoized separately.
#[derive(Clone, Debug)]
pub struct LeadLesserTerms {
    pub a: CMat,
    pub q: CMat,
    /// `y - y^H`
    pub y_anti: CMat,
}

impl LeadLesserTerms {
    pub fn new(c: &ContactBlocks, x: &CMat, b0: &CMat, bc: &CMat) -> Self {
        let y = mm3(&c.n, x, bc);
        let y_anti = &y - adj(&y);
        let q = mm3(x, &(b0 - &y_anti), &adj(x));
        LeadLesserTerms { a: mm(x, &c.n), q, y_anti }
    }

    /// `n w n^H - (y - y^H)`
    pub fn boundary(&self, c: &ContactBlocks, w: &CMat) -> CMat {
        mm3(&c.n, w, &adj(&c.n)) - &self.y_anti
    }
}

/// One fixed-point step of the `+` Stein equation, used by the memoizer.
pub fn stein_step(a: &CMat, q: &CMat, w: &CMat) -> CMat {
    q + mm3(a, w, &adj(a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, random_cmat, rel_err, zeros};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scaled(seed: u64, n: usize, rho: f64) -> (CMat, CMat) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_cmat(&mut rng, n, n);
        let (lam, _) = eig(&a);
        let r = lam.iter().map(|l| l.norm()).fold(0.0, f64::max);
        let a = a * c64(rho / r, 0.0);
        let q0 = random_cmat(&mut rng, n, n);
        (a, &q0 - q0.adjoint())
    }

    fn residual(a: &CMat, q: &CMat, w: &CMat) -> f64 {
        (w + a * w * a.adjoint() - q).norm() / q.norm()
    }

    #[test]
    fn zero_a_returns_q() {
        let (_, q) = scaled(1, 4, 0.5);
        for m in [LyapunovMethod::Doubling, LyapunovMethod::EigenDirect, LyapunovMethod::KronOracle] {
            assert!(rel_err(&lyapunov_solve(&zeros(4, 4), &q, m, 1e-14).unwrap(), &q) < 1e-15);
        }
    }

    #[test]
    fn doubling_matches_kronecker() {
        for n in 1..=8 {
            for &rho in &[0.5, 0.9] {
                let (a, q) = scaled(n as u64, n, rho);
                let wk = lyapunov_solve(&a, &q, LyapunovMethod::KronOracle, 0.0).unwrap();
                let wd = lyapunov_solve(&a, &q, LyapunovMethod::Doubling, 1e-15).unwrap();
                let we = lyapunov_solve(&a, &q, LyapunovMethod::EigenDirect, 0.0).unwrap();
                assert!(rel_err(&wd, &wk) < 1e-10, "n={n} rho={rho}");
                assert!(rel_err(&we, &wk) < 1e-10);
                assert!(residual(&a, &q, &wd) < 1e-12);
            }
        }
    }

    #[test]
    fn anti_hermitian_structure_preserved() {
        let (a, q) = scaled(3, 5, 0.7);
        let w = lyapunov_solve(&a, &q, LyapunovMethod::Doubling, 1e-15).unwrap();
        assert!((&w + w.adjoint()).norm() < 1e-13 * w.norm());
    }

    #[test]
    fn unstable_a_rejected_by_doubling() {
        let (a, q) = scaled(4, 3, 1.2);
        assert!(matches!(lyapunov_solve(&a, &q, LyapunovMethod::Doubling, 1e-12), Err(Error::SpectralRadius { .. })));
        // the direct methods still apply since 1 + lambda_i conj(lambda_j) != 0
        assert!(lyapunov_solve(&a, &q, LyapunovMethod::EigenDirect, 0.0).is_ok());
    }

    #[test]
    fn defective_matrix_falls_back() {
        let mut a = zeros(3, 3);
        a[(0, 1)] = c64(1.0, 0.0);
        a[(1, 2)] = c64(1.0, 0.0);
        let a = a + eye(3) * c64(0.3, 0.0);
        let (_, q) = scaled(5, 3, 0.5);
        let we = lyapunov_solve(&a, &q, LyapunovMethod::EigenDirect, 0.0).unwrap();
        assert!(residual(&a, &q, &we) < 1e-12);
    }

    #[test]
    fn plus_form() {
        let (a, q) = scaled(6, 4, 0.8);
        let w = stein_solve(&a, &q, 1.0, LyapunovMethod::Doubling, 1e-15).unwrap();
        let wk = stein_solve(&a, &q, 1.0, LyapunovMethod::KronOracle, 0.0).unwrap();
        assert!(rel_err(&w, &wk) < 1e-10);
        assert!(rel_err(&stein_step(&a, &q, &w), &w) < 1e-12);
    }

    #[test]
    fn spectral_radius_estimate_is_close() {
        let (a, _) = scaled(9, 6, 0.6);
        assert!((spectral_radius_estimate(&a) - 0.6).abs() < 0.01);
    }

    /// A lead of `k` cells plus one device cell, solved densely; the device
    /// cell's lesser block must match the boundary-term construction.
    #[test]
    fn lead_lesser_matches_long_chain() {
        use crate::obc::testing::random_lead;
        use crate::obc::{obc_sancho_rubio, Side};
        use crate::rgf::rgf_solve;
        use crate::bt::{BlockMatrix, Storage};
        let n = 3;
        let k = 120;
        for side in [Side::Left, Side::Right] {
            let mut c = random_lead(31, n, 0.3, 0.3, 0.5);
            c.side = side;
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let b0r = random_cmat(&mut rng, n, n);
            let b0 = &b0r - b0r.adjoint();
            let b_up = random_cmat(&mut rng, n, n) * c64(0.4, 0.0);
            // coupling blocks in system orientation: upper (i, i+1) and lower (i+1, i)
            let (m_up, m_lo) = match side {
                Side::Left => (c.n_prime.clone(), c.n.clone()),
                Side::Right => (c.n.clone(), c.n_prime.clone()),
            };
            let nb = k + 1;
            let mut m = BlockMatrix::zeros(nb, n, 3, Storage::Full).unwrap();
            let mut b = m.clone();
            for i in 0..nb {
                m.set(i, i, c.m.clone()).unwrap();
                b.set(i, i, b0.clone()).unwrap();
                if i + 1 < nb {
                    m.set(i, i + 1, m_up.clone()).unwrap();
                    m.set(i + 1, i, m_lo.clone()).unwrap();
                    b.set(i, i + 1, b_up.clone()).unwrap();
                    b.set(i + 1, i, -b_up.adjoint()).unwrap();
                }
            }
            let dev = if side == Side::Left { nb - 1 } else { 0 };
            let sol = rgf_solve(&m, Some(&b), None).unwrap();
            let x_long = sol.lesser.unwrap().diag[dev].clone();

            let (x, _) = obc_sancho_rubio(&c, 1e-14, 500).unwrap();
            let bc = match side {
                Side::Left => b_up.clone(),
                Side::Right => -b_up.adjoint(),
            };
            let (_, boundary) = lead_lesser(&c, &x, &b0, &bc, LyapunovMethod::Doubling, 1e-15).unwrap();
            let g = crate::linalg::inv(&(&c.m - c.self_energy(&x)), "test", 0).unwrap();
            let x_obc = &g * (&b0 + boundary) * g.adjoint();
            assert!(rel_err(&x_obc, &x_long) < 1e-9, "{side:?}: {}", rel_err(&x_obc, &x_long));
        }
    }
}
