//! Contour-integral (Beyn) solver for the lead eigenproblem.
//!
//! Bloch modes `phi` of a periodic lead with transfer factor `lambda`
//! satisfy `T(lambda) phi = 0` where `T(z) = z^{-1} n' + m + z n`. The modes
//! decaying into the lead (`|lambda| < 1`) give the transfer matrix
//! `F = Phi Lambda Phi^{-1}` and the surface function `x = (m + n F)^{-1}`.
//! Modes inside the unit circle are extracted with two contour moments of
//! `T^{-1}` against a probe matrix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ContactBlocks;
use crate::bt::device::Subsystem;
use crate::error::{Error, Result};
use crate::linalg::{c64, eig, inv, mm, random_cmat, solve, svd, zeros, CMat, C64};

use super::Side;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BeynParams {
    pub n_quad: usize,
    pub radius: f64,
    pub center: f64,
    pub svd_tol: f64,
    /// Quadrature points are doubled from `n_quad` until the surface
    /// residual drops below `residual_tol` or `max_quad` is reached.
    pub residual_tol: f64,
    pub max_quad: usize,
    pub seed: u64,
}

impl Default for BeynParams {
    fn default() -> Self {
        BeynParams {
            n_quad: 16,
            radius: 1.0,
            center: 0.0,
            svd_tol: 1e-8,
            residual_tol: 1e-10,
            max_quad: 4096,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BeynResult {
    pub x: CMat,
    pub n_modes: usize,
    /// Set when no mode was found inside the contour.
    pub warning: bool,
    pub n_quad: usize,
    pub residual: f64,
}

/// Groups primitive Laurent blocks `m_{-K}..m_{K}` (`m_k` couples a cell to
/// the cell `k` steps further into the lead) into transport-cell blocks
/// `(m, n, n')` with `N_U = K`.
pub fn group_laurent(blocks: &[CMat]) -> Result<(CMat, CMat, CMat)> {
    if blocks.len() % 2 == 0 {
        return Err(Error::Shape(format!("expected 2 N_U + 1 primitive blocks, got {}", blocks.len())));
    }
    let k = (blocks.len() - 1) / 2;
    let p = blocks[0].nrows();
    if blocks.iter().any(|b| b.shape() != (p, p)) {
        return Err(Error::Shape("primitive blocks differ in shape".into()));
    }
    let nu = k.max(1);
    let size = nu * p;
    let get = |d: isize| -> Option<&CMat> {
        let idx = d + k as isize;
        if idx < 0 || idx as usize >= blocks.len() {
            None
        } else {
            Some(&blocks[idx as usize])
        }
    };
    let mut m = zeros(size, size);
    let mut n = zeros(size, size);
    let mut np = zeros(size, size);
    for i in 0..nu {
        for j in 0..nu {
            let (ii, jj) = (i as isize, j as isize);
            for (target, d) in [(&mut m, jj - ii), (&mut n, jj + nu as isize - ii), (&mut np, jj - nu as isize - ii)] {
                if let Some(b) = get(d) {
                    target.view_mut((i * p, j * p), (p, p)).copy_from(b);
                }
            }
        }
    }
    Ok((m, n, np))
}

/// Beyn solve from primitive Laurent blocks.
pub fn obc_beyn_blocks(m_tilde_blocks: &[CMat], params: &BeynParams) -> Result<BeynResult> {
    let (m, n, np) = group_laurent(m_tilde_blocks)?;
    let c = ContactBlocks::new(m, n, np, Side::Right, Subsystem::G)?;
    obc_beyn(&c, params)
}

fn null_space(a: &CMat, rel_tol: f64) -> CMat {
    let n = a.ncols();
    let (_, s, vt) = svd(a);
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&v| v > rel_tol * smax && v > 0.0).count();
    let mut out = zeros(n, n - rank);
    for (c, r) in (rank..n).enumerate() {
        for i in 0..n {
            out[(i, c)] = vt[(r, i)].conj();
        }
    }
    out
}

/// Surface function of a transport-cell lead by contour integration.
pub fn obc_beyn(c: &ContactBlocks, params: &BeynParams) -> Result<BeynResult> {
    if params.n_quad < 8 {
        return Err(Error::InvalidInput(format!("n_quad must be >= 8, got {}", params.n_quad)));
    }
    if !(params.radius > 0.0 && params.radius <= 1.0) {
        return Err(Error::InvalidInput(format!("contour radius must lie in (0, 1], got {}", params.radius)));
    }
    let mut nq = params.n_quad;
    let mut best: Option<BeynResult> = None;
    loop {
        let r = beyn_once(c, params, nq)?;
        let done = r.residual <= params.residual_tol || r.warning;
        if best.as_ref().is_none_or(|b| r.residual < b.residual) {
            best = Some(r);
        }
        if done || nq * 2 > params.max_quad {
            break;
        }
        nq *= 2;
    }
    let best = best.expect("at least one pass");
    if best.residual > 1e-6 {
        return Err(Error::NotConverged {
            method: "beyn",
            iters: best.n_quad,
            last_update: best.residual,
        });
    }
    Ok(best)
}

fn beyn_once(c: &ContactBlocks, params: &BeynParams, nq: usize) -> Result<BeynResult> {
    let n = c.size();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let probe = random_cmat(&mut rng, n, n);
    let center = c64(params.center, 0.0);

    let mut a0 = zeros(n, n);
    let mut a1 = zeros(n, n);
    for j in 0..nq {
        let theta = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / nq as f64;
        let w = C64::from_polar(params.radius, theta);
        let z = center + w;
        let t = &c.n_prime / z + &c.m + &c.n * z;
        let y = solve(&t, &probe, "beyn quadrature node", j)?;
        let wy = y * (w / nq as f64);
        a1 += &wy * z;
        a0 += wy;
    }

    let (u, s, vt) = svd(&a0);
    let smax = s[0];
    let m_inv = inv(&c.m, "beyn", 0)?;
    let scale = m_inv.norm() * probe.norm();
    let rank = if smax <= 1e-12 * scale {
        0
    } else {
        s.iter().filter(|&&v| v > params.svd_tol * smax).count()
    };
    if rank == 0 {
        log::warn!("beyn: no modes inside the contour, falling back to m^-1");
        let residual = c.residual(&m_inv);
        return Ok(BeynResult { x: m_inv, n_modes: 0, warning: true, n_quad: nq, residual });
    }

    // Reduced matrix B = V0^H A1 W0 S0^{-1}.
    let v0 = u.columns(0, rank).into_owned();
    let w0 = vt.rows(0, rank).adjoint();
    let mut b = mm(&mm(&v0.adjoint(), &a1), &w0);
    for k in 0..rank {
        let inv_s = 1.0 / s[k];
        b.column_mut(k).scale_mut(inv_s);
    }
    let (lambda0, sv) = eig(&b);
    let modes0 = mm(&v0, &sv);

    // Quadrature errors are largest for modes close to the contour; a few
    // Newton steps on the quadratic eigenproblem remove them.
    let mut lambda = Vec::with_capacity(rank);
    let mut modes = zeros(n, rank);
    for k in 0..rank {
        let (l, v) = refine_eigenpair(c, lambda0[k], modes0.columns(k, 1).into_owned());
        lambda.push(l);
        modes.set_column(k, &v.column(0));
    }

    let mut keep: Vec<usize> = Vec::new();
    for k in 0..rank {
        let inside = (lambda[k] - center).norm() < params.radius * (1.0 - 1e-8) && lambda[k].norm() < 1.0 - 1e-8;
        let duplicate = keep.iter().any(|&j| (lambda[j] - lambda[k]).norm() < 1e-10 * (1.0 + lambda[k].norm())
            && (modes.column(j).adjoint() * modes.column(k))[(0, 0)].norm() > 1.0 - 1e-8);
        if inside && !duplicate && lambda[k].norm() > 0.0 {
            keep.push(k);
        }
    }

    // Modes with lambda = 0 are invisible to T^{-1}; they span null(n').
    let null = null_space(&c.n_prime, 1e-12);
    let cols = keep.len() + null.ncols();
    let mut phi = zeros(n, cols);
    let mut phi_l = zeros(n, cols);
    for (cidx, &k) in keep.iter().enumerate() {
        phi.set_column(cidx, &modes.column(k));
        phi_l.set_column(cidx, &(modes.column(k) * lambda[k]));
    }
    for k in 0..null.ncols() {
        phi.set_column(keep.len() + k, &null.column(k));
    }

    if cols == 0 {
        let residual = f64::INFINITY;
        return Ok(BeynResult { x: m_inv, n_modes: 0, warning: false, n_quad: nq, residual });
    }
    let f = if cols == n {
        match crate::linalg::inv_with_pivot_ratio(&phi) {
            Some((pinv, _)) => mm(&phi_l, &pinv),
            None => mm(&phi_l, &pseudo_inverse(&phi)),
        }
    } else {
        mm(&phi_l, &pseudo_inverse(&phi))
    };
    let x = inv(&(&c.m + mm(&c.n, &f)), "beyn surface", 0)?;
    let residual = c.residual(&x);
    Ok(BeynResult { x, n_modes: keep.len(), warning: false, n_quad: nq, residual })
}

/// Newton iteration for `P(l) v = 0`, `P(l) = n' + l m + l^2 n`, with the
/// normalisation `v0^H v = 1`.
fn refine_eigenpair(c: &ContactBlocks, l0: C64, v0: CMat) -> (C64, CMat) {
    let n = c.size();
    let nrm = v0.norm();
    if nrm == 0.0 {
        return (l0, v0);
    }
    let u = v0 / c64(nrm, 0.0);
    let scale = c.m.norm() + c.n.norm() + c.n_prime.norm();
    let mut l = l0;
    let mut v = u.clone();
    let mut best = (f64::INFINITY, l, v.clone());
    for _ in 0..12 {
        let p = &c.n_prime + &c.m * l + &c.n * (l * l);
        let r = &p * &v;
        let res = r.norm() / (scale * v.norm());
        if res < best.0 {
            best = (res, l, v.clone());
        }
        if res < 1e-15 {
            break;
        }
        let dp = (&c.m + &c.n * (l * c64(2.0, 0.0))) * &v;
        let mut j = zeros(n + 1, n + 1);
        j.view_mut((0, 0), (n, n)).copy_from(&p);
        j.view_mut((0, n), (n, 1)).copy_from(&dp);
        j.view_mut((n, 0), (1, n)).copy_from(&u.adjoint());
        let mut rhs = zeros(n + 1, 1);
        rhs.view_mut((0, 0), (n, 1)).copy_from(&(-r));
        rhs[(n, 0)] = c64(1.0, 0.0) - (u.adjoint() * &v)[(0, 0)];
        let Ok(d) = solve(&j, &rhs, "beyn refinement", 0) else { break };
        v += d.view((0, 0), (n, 1));
        l += d[(n, 0)];
        if !l.re.is_finite() || !l.im.is_finite() {
            break;
        }
    }
    let (_, l, v) = best;
    let vn = v.norm();
    (l, v / c64(vn, 0.0))
}

fn pseudo_inverse(a: &CMat) -> CMat {
    let (u, s, vt) = svd(a);
    let smax = s.first().copied().unwrap_or(0.0);
    let mut out = zeros(a.ncols(), a.nrows());
    for (k, &sv) in s.iter().enumerate() {
        if sv > 1e-12 * smax {
            out += vt.row(k).adjoint() * u.column(k).adjoint() / c64(sv, 0.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eye, random_hermitian, rel_err};
    use crate::obc::sancho::obc_sancho_rubio;
    use crate::obc::testing::*;

    #[test]
    fn tight_binding_chain_matches_sancho_and_closed_form() {
        for &(e, eta) in &[(0.3, 1e-3), (-1.2, 1e-2), (2.5, 1e-3)] {
            let z = c64(e, eta);
            let c = chain(z, 1.0);
            let r = obc_beyn(&c, &BeynParams::default()).unwrap();
            let (xs, _) = obc_sancho_rubio(&c, 1e-12, 200).unwrap();
            assert!(rel_err(&r.x, &xs) < 1e-6);
            let want = chain_surface(z, 1.0);
            assert!((r.x[(0, 0)] - want).norm() / want.norm() < 1e-8);
        }
    }

    #[test]
    fn zero_coupling_returns_inverse_with_warning() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m0 = random_hermitian(&mut rng, 3) + eye(3) * c64(0.0, 0.5);
        let z = zeros(3, 3);
        let r = obc_beyn_blocks(&[z.clone(), m0.clone(), z], &BeynParams::default()).unwrap();
        assert_eq!(r.n_modes, 0);
        assert!(r.warning);
        assert!(rel_err(&r.x, &m0.try_inverse().unwrap()) < 1e-14);
    }

    #[test]
    fn random_lead_agrees_with_sancho() {
        for seed in 0..5 {
            let c = random_lead(seed, 4, 0.3, 1e-3, 0.3);
            let r = obc_beyn(&c, &BeynParams::default()).unwrap();
            let (xs, _) = obc_sancho_rubio(&c, 1e-12, 200).unwrap();
            assert!(rel_err(&r.x, &xs) < 1e-6, "seed {seed}: {}", rel_err(&r.x, &xs));
        }
    }

    #[test]
    fn grouped_range_four_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = 2;
        let nu = 4;
        let h0 = random_hermitian(&mut rng, p);
        let mut right = Vec::new();
        for k in 1..=nu {
            right.push(random_cmat(&mut rng, p, p) * c64(0.5f64.powi(k as i32), 0.0));
        }
        // m_k = -h_k, m_{-k} = -h_k^H, m_0 = (E + i eta) - h0
        let mut blocks: Vec<CMat> = right.iter().rev().map(|h| -h.adjoint()).collect();
        blocks.push(eye(p) * c64(0.2, 1e-2) - h0);
        blocks.extend(right.iter().map(|h| -h));
        let r = obc_beyn_blocks(&blocks, &BeynParams::default()).unwrap();
        assert_eq!(r.x.nrows(), p * nu);
        assert!(r.residual < 1e-6);
    }

    #[test]
    fn grouping_layout() {
        let b: Vec<CMat> = (0..5).map(|k| CMat::from_element(1, 1, c64(k as f64, 0.0))).collect();
        // m_{-2}..m_{2} carry the values 0..4
        let (m, n, np) = group_laurent(&b).unwrap();
        assert_eq!(m[(0, 1)], c64(3.0, 0.0));
        assert_eq!(m[(1, 0)], c64(1.0, 0.0));
        assert_eq!(n[(0, 0)], c64(4.0, 0.0));
        assert_eq!(n[(1, 0)], c64(3.0, 0.0));
        assert_eq!(n[(0, 1)], c64(0.0, 0.0));
        assert_eq!(np[(0, 0)], c64(0.0, 0.0));
        assert_eq!(np[(0, 1)], c64(1.0, 0.0));
    }

    #[test]
    fn bad_contours_rejected() {
        let c = chain(c64(0.3, 0.01), 1.0);
        let p = BeynParams { n_quad: 4, ..Default::default() };
        assert!(obc_beyn(&c, &p).is_err());
        let p = BeynParams { radius: 0.0, ..Default::default() };
        assert!(obc_beyn(&c, &p).is_err());
    }
}
