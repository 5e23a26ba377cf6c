//! Recursive Green's function (RGF) selected solver for block-tridiagonal systems.
//!
//! Given `M` (block-tridiagonal) and `B` (block-tridiagonal, `B_ij = -B_ji^H`)
//! this computes the diagonal and first off-diagonal blocks of
//! `X^R = M^{-1}` and `X^≶ = M^{-1} B M^{-H}` using one forward and one
//! backward sweep of `N_B` block steps each.

use crate::bt::BlockMatrix;
use crate::error::{Error, Result};
use crate::linalg::{adj, inv, mm, mm3, CMat};

/// Left-connected retarded blocks `x_i` of the forward sweep.
#[derive(Clone, Debug)]
pub struct Forward {
    pub x: Vec<CMat>,
}

/// Diagonal and first off-diagonal blocks of the retarded solution.
#[derive(Clone, Debug, PartialEq)]
pub struct RetardedBlocks {
    pub diag: Vec<CMat>,
    pub upper: Vec<CMat>,
    pub lower: Vec<CMat>,
}

/// Diagonal and upper off-diagonal blocks of a lesser/greater solution.
/// Lower blocks follow from `X_{i+1,i} = -X_{i,i+1}^H`.
#[derive(Clone, Debug, PartialEq)]
pub struct LgBlocks {
    pub diag: Vec<CMat>,
    pub upper: Vec<CMat>,
}

impl LgBlocks {
    pub fn lower(&self, i: usize) -> CMat {
        -adj(&self.upper[i])
    }

    /// Projects onto `X_ij = -X_ji^H` (diagonal blocks only; off-diagonal
    /// blocks are symmetric by construction).
    pub fn symmetrize(&mut self) {
        for d in &mut self.diag {
            *d = (&*d - adj(d)) * crate::linalg::c64(0.5, 0.0);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectedSolution {
    pub retarded: RetardedBlocks,
    pub lesser: Option<LgBlocks>,
    pub greater: Option<LgBlocks>,
}

fn check_tridiagonal(m: &BlockMatrix) -> Result<()> {
    if m.n_blocks() > 1 && m.bandwidth() != 3 {
        return Err(Error::Shape(format!("expected a block-tridiagonal matrix, got bandwidth {}", m.bandwidth())));
    }
    Ok(())
}

/// Forward sweep: `x_0 = M_00^{-1}`, `x_i = (M_ii - M_{i,i-1} x_{i-1} M_{i-1,i})^{-1}`.
pub fn rgf_forward(m: &BlockMatrix) -> Result<Forward> {
    check_tridiagonal(m)?;
    let nb = m.n_blocks();
    let mut x = Vec::with_capacity(nb);
    x.push(inv(&m.block(0, 0), "rgf forward pass", 0)?);
    for i in 1..nb {
        let s = m.block(i, i) - mm3(&m.block(i, i - 1), &x[i - 1], &m.block(i - 1, i));
        x.push(inv(&s, "rgf forward pass", i)?);
    }
    Ok(Forward { x })
}

/// Selected blocks of `M^{-1}`, together with the forward intermediates.
pub fn rgf_retarded(m: &BlockMatrix) -> Result<(RetardedBlocks, Forward)> {
    let fwd = rgf_forward(m)?;
    let nb = m.n_blocks();
    let mut diag = fwd.x.clone();
    let mut upper = vec![CMat::zeros(0, 0); nb.saturating_sub(1)];
    let mut lower = upper.clone();
    for i in (0..nb.saturating_sub(1)).rev() {
        let x = &fwd.x[i];
        // x_i M_{i,i+1} and M_{i+1,i} x_i are shared by all three updates.
        let xu = mm(x, &m.block(i, i + 1));
        let lx = mm(&m.block(i + 1, i), x);
        let up = -mm(&xu, &diag[i + 1]);
        let lo = -mm(&diag[i + 1], &lx);
        diag[i] = x - mm(&up, &lx);
        upper[i] = up;
        lower[i] = lo;
    }
    Ok((RetardedBlocks { diag, upper, lower }, fwd))
}

/// Selected blocks of `M^{-1} B M^{-H}` reusing the retarded sweep.
pub fn rgf_lesser_greater(m: &BlockMatrix, b: &BlockMatrix, fwd: &Forward, ret: &RetardedBlocks) -> Result<LgBlocks> {
    check_tridiagonal(b)?;
    if b.n_blocks() != m.n_blocks() || b.block_size() != m.block_size() {
        return Err(Error::Shape("M and B block structures differ".into()));
    }
    let nb = m.n_blocks();
    let xs = &fwd.x;

    // Forward: x^≶_i = x_i (B_ii + M_{i,i-1} x^≶_{i-1} M_{i,i-1}^H - (y - y^H)) x_i^H,
    // with y = M_{i,i-1} x_{i-1} B_{i-1,i}.
    let mut xl = Vec::with_capacity(nb);
    xl.push(mm3(&xs[0], &b.block(0, 0), &adj(&xs[0])));
    for i in 1..nb {
        let lo = m.block(i, i - 1);
        let y = mm3(&lo, &xs[i - 1], &b.block(i - 1, i));
        let inner = b.block(i, i) + mm3(&lo, &xl[i - 1], &adj(&lo)) - (&y - adj(&y));
        xl.push(mm3(&xs[i], &inner, &adj(&xs[i])));
    }

    // Backward sweep.
    let mut diag = vec![CMat::zeros(0, 0); nb];
    let mut upper = vec![CMat::zeros(0, 0); nb.saturating_sub(1)];
    diag[nb - 1] = xl[nb - 1].clone();
    for i in (0..nb.saturating_sub(1)).rev() {
        let x = &xs[i];
        let xh = adj(x);
        let up_m = m.block(i, i + 1);
        let lo_m = m.block(i + 1, i);
        let gr = &ret.diag[i + 1];
        let grh = adj(gr);
        let xu = mm(x, &up_m);
        let xu_g = mm(&xu, gr);
        let b_up = b.block(i, i + 1);

        // Off-diagonal block X^≶_{i,i+1}.
        let t1 = mm3(&xl[i], &adj(&lo_m), &grh);
        let t2 = mm3(x, &b_up, &grh);
        let t3 = mm(&xu, &diag[i + 1]);
        upper[i] = t2 - t1 - t3;

        // Diagonal block X^≶_i.
        let yy = mm3(x, &b_up, &adj(&xu_g));
        let zz = mm3(&xu_g, &lo_m, &xl[i]);
        let prop = mm3(&xu, &diag[i + 1], &mm(&adj(&up_m), &xh));
        diag[i] = &xl[i] + prop - (&yy - adj(&yy)) + (&zz - adj(&zz));
    }
    Ok(LgBlocks { diag, upper })
}

/// Full selected solve for the retarded and any requested ≶ right-hand sides.
pub fn rgf_solve(m: &BlockMatrix, b_lesser: Option<&BlockMatrix>, b_greater: Option<&BlockMatrix>) -> Result<SelectedSolution> {
    let (retarded, fwd) = rgf_retarded(m)?;
    let lesser = b_lesser.map(|b| rgf_lesser_greater(m, b, &fwd, &retarded)).transpose()?;
    let greater = b_greater.map(|b| rgf_lesser_greater(m, b, &fwd, &retarded)).transpose()?;
    Ok(SelectedSolution { retarded, lesser, greater })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::bt::{symmetrize_lg, Storage};
    use crate::linalg::{c64, eye, random_cmat, rel_err};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_system(seed: u64, nb: usize, bs: usize) -> (BlockMatrix, BlockMatrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bw = if nb == 1 { 1 } else { 3 };
        let mut m = BlockMatrix::zeros(nb, bs, bw, Storage::Full).unwrap();
        let mut b = m.clone();
        for (i, j) in m.stored_pattern() {
            let mut blk = random_cmat(&mut rng, bs, bs);
            if i == j {
                blk += eye(bs) * c64(2.0 * bs as f64 + 2.0, 0.5);
            }
            m.set(i, j, blk).unwrap();
            b.set(i, j, random_cmat(&mut rng, bs, bs)).unwrap();
        }
        (m, symmetrize_lg(&b))
    }

    fn dense_blocks(d: &CMat, bs: usize, i: usize, j: usize) -> CMat {
        d.view((i * bs, j * bs), (bs, bs)).into_owned()
    }

    fn check(seed: u64, nb: usize, bs: usize, tol: f64) {
        let (m, b) = random_system(seed, nb, bs);
        let sol = rgf_solve(&m, Some(&b), None).unwrap();
        let gd = m.to_dense().try_inverse().unwrap();
        let xd = &gd * b.to_dense() * gd.adjoint();
        let lg = sol.lesser.unwrap();
        for i in 0..nb {
            assert!(rel_err(&sol.retarded.diag[i], &dense_blocks(&gd, bs, i, i)) < tol);
            assert!(rel_err(&lg.diag[i], &dense_blocks(&xd, bs, i, i)) < tol, "lesser diag {i}");
        }
        for i in 0..nb - 1 {
            assert!(rel_err(&sol.retarded.upper[i], &dense_blocks(&gd, bs, i, i + 1)) < tol);
            assert!(rel_err(&sol.retarded.lower[i], &dense_blocks(&gd, bs, i + 1, i)) < tol);
            assert!(rel_err(&lg.upper[i], &dense_blocks(&xd, bs, i, i + 1)) < tol, "lesser upper {i}");
            assert!(rel_err(&lg.lower(i), &dense_blocks(&xd, bs, i + 1, i)) < tol);
        }
    }

    #[test]
    fn single_block_is_dense_solve() {
        let (m, b) = random_system(1, 1, 4);
        let sol = rgf_solve(&m, Some(&b), None).unwrap();
        let x = m.block(0, 0).try_inverse().unwrap();
        assert!(rel_err(&sol.retarded.diag[0], &x) < 1e-14);
        let want = &x * b.block(0, 0) * x.adjoint();
        assert!(rel_err(&sol.lesser.unwrap().diag[0], &want) < 1e-13);
    }

    #[test]
    fn block_diagonal_system() {
        let (m, _) = random_system(2, 4, 3);
        let d = m.truncate(1).unwrap().widen(3).unwrap();
        let (r, _) = rgf_retarded(&d).unwrap();
        for i in 0..4 {
            assert!(rel_err(&r.diag[i], &d.block(i, i).try_inverse().unwrap()) < 1e-14);
        }
        assert!(r.upper.iter().chain(r.lower.iter()).all(|u| u.norm() == 0.0));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let (m, _) = random_system(3, 5, 2);
        let z = BlockMatrix::zeros(5, 2, 3, Storage::Full).unwrap();
        let lg = rgf_solve(&m, Some(&z), None).unwrap().lesser.unwrap();
        assert!(lg.diag.iter().chain(lg.upper.iter()).all(|u| u.norm() == 0.0));
    }

    #[test]
    fn matches_dense_oracle() {
        check(4, 8, 6, 1e-11);
        check(5, 6, 4, 1e-10);
        for seed in 0..20 {
            check(100 + seed, 2 + (seed as usize % 7), 1 + (seed as usize % 5), 1e-10);
        }
    }

    #[test]
    fn singular_step_reports_index() {
        let (mut m, _) = random_system(6, 4, 2);
        m.set(0, 0, CMat::zeros(2, 2)).unwrap();
        assert!(matches!(rgf_forward(&m), Err(Error::Singular { step: 0, .. })));
    }
}
