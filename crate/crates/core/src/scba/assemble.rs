//! System matrices and right-hand sides of the electron and screened
//! interaction problems.
//!
//! ```text
//! G:  M = E S - H - Σ^R_scatt - Σ^R_obc      B^≶ = Σ^≶_scatt + Σ^≶_obc
//! W:  M = I - V P^R - B^R_obc                B^≶ = V P^≶ V^H + B^≶_obc
//! ```
//!
//! The basis is orthonormal (`S = I`). Boundary terms only touch the two
//! corner blocks. The W products have block bandwidths 5 and 7 and are cut
//! back to the tridiagonal band for the selected solve.

use crate::bt::{bt_multiply, symmetrize_lg, BlockMatrix};
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};

/// Boundary blocks added at one corner.
#[derive(Clone, Debug, PartialEq)]
pub struct Boundary {
    pub retarded: CMat,
    pub lesser: CMat,
    pub greater: CMat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPair {
    pub left: Boundary,
    pub right: Boundary,
}

/// Retarded, lesser and greater parts of one block-tridiagonal quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct Triple {
    pub retarded: BlockMatrix,
    pub lesser: BlockMatrix,
    pub greater: BlockMatrix,
}

impl Triple {
    pub fn zeros(n_b: usize, bs: usize) -> Result<Self> {
        let z = BlockMatrix::zeros(n_b, bs, tri(n_b), crate::bt::Storage::Full)?;
        Ok(Triple { retarded: z.clone(), lesser: z.clone(), greater: z })
    }

    /// `a * self + (1 - a) * other`
    pub fn mix(&self, other: &Triple, a: f64) -> Result<Triple> {
        let s = C64::new(a, 0.0);
        let t = C64::new(1.0 - a, 0.0);
        let f = |x: &BlockMatrix, y: &BlockMatrix| x.scale(s).axpy(t, y);
        Ok(Triple {
            retarded: f(&self.retarded, &other.retarded)?,
            lesser: f(&self.lesser, &other.lesser)?,
            greater: f(&self.greater, &other.greater)?,
        })
    }
}

/// A system ready for the selected solver.
#[derive(Clone, Debug, PartialEq)]
pub struct System {
    pub m: BlockMatrix,
    pub b_lesser: BlockMatrix,
    pub b_greater: BlockMatrix,
}

pub(crate) fn tri(n_b: usize) -> usize {
    3.min(2 * n_b - 1)
}

fn corner_add(m: &mut BlockMatrix, i: usize, d: &CMat, s: f64) -> Result<()> {
    let b = m.block(i, i) + d * C64::new(s, 0.0);
    m.set(i, i, b)
}

/// Subtracts the retarded boundary terms from `M` and adds the lesser and
/// greater ones to `B^≶`.
pub fn apply_boundary(sys: &mut System, obc: &BoundaryPair) -> Result<()> {
    let last = sys.m.n_blocks() - 1;
    for (i, b) in [(0, &obc.left), (last, &obc.right)] {
        corner_add(&mut sys.m, i, &b.retarded, -1.0)?;
        corner_add(&mut sys.b_lesser, i, &b.lesser, 1.0)?;
        corner_add(&mut sys.b_greater, i, &b.greater, 1.0)?;
    }
    Ok(())
}

fn check_bt(name: &str, m: &BlockMatrix, n_b: usize, bs: usize) -> Result<()> {
    if m.n_blocks() != n_b || m.block_size() != bs || m.bandwidth() > tri(n_b) {
        return Err(Error::Shape(format!(
            "{name}: {} blocks of {} with bandwidth {}, expected {n_b} blocks of {bs}, tridiagonal",
            m.n_blocks(),
            m.block_size(),
            m.bandwidth()
        )));
    }
    Ok(())
}

/// Electron system at energy `e`.
pub fn assemble_g_system(e: f64, h: &BlockMatrix, scatt: Option<&Triple>, obc: Option<&BoundaryPair>) -> Result<System> {
    let (n_b, bs) = (h.n_blocks(), h.block_size());
    check_bt("H", h, n_b, bs)?;
    let zero = BlockMatrix::zeros(n_b, bs, tri(n_b), crate::bt::Storage::Full)?;
    let mut m = zero.axpy(C64::new(e, 0.0), &BlockMatrix::identity(n_b, bs))?.sub(h)?;
    let (mut bl, mut bg) = (zero.clone(), zero);
    if let Some(s) = scatt {
        for (name, x) in [("Σ^R", &s.retarded), ("Σ^<", &s.lesser), ("Σ^>", &s.greater)] {
            check_bt(name, x, n_b, bs)?;
        }
        m = m.sub(&s.retarded)?;
        bl = bl.add(&s.lesser)?;
        bg = bg.add(&s.greater)?;
    }
    let mut sys = System { m, b_lesser: bl, b_greater: bg };
    if let Some(o) = obc {
        apply_boundary(&mut sys, o)?;
    }
    Ok(sys)
}

/// `V P^R` (bandwidth 5) and `V P^≶ V^H` (bandwidth 7) before truncation.
pub fn w_products(v: &BlockMatrix, p: &Triple) -> Result<(BlockMatrix, BlockMatrix, BlockMatrix)> {
    let vh = v.adjoint();
    let vpr = bt_multiply(v, &p.retarded)?;
    let vpl = bt_multiply(&bt_multiply(v, &p.lesser)?, &vh)?;
    let vpg = bt_multiply(&bt_multiply(v, &p.greater)?, &vh)?;
    Ok((vpr, vpl, vpg))
}

/// Left-hand side `I - V P^R` cut to the tridiagonal band.
pub fn assemble_w_lhs(v: &BlockMatrix, p_r: &BlockMatrix) -> Result<BlockMatrix> {
    let n_b = v.n_blocks();
    let vp = bt_multiply(v, p_r)?.truncate(tri(n_b))?;
    let zero = BlockMatrix::zeros(n_b, v.block_size(), tri(n_b), crate::bt::Storage::Full)?;
    zero.add(&BlockMatrix::identity(n_b, v.block_size()))?.sub(&vp)
}

/// Right-hand side `V P^≶ V^H` cut to the tridiagonal band and projected
/// onto anti-Hermitian form.
pub fn assemble_w_rhs(v: &BlockMatrix, p_lg: &BlockMatrix) -> Result<BlockMatrix> {
    let n_b = v.n_blocks();
    let x = bt_multiply(&bt_multiply(v, p_lg)?, &v.adjoint())?.truncate(tri(n_b))?;
    Ok(symmetrize_lg(&x))
}

/// Screened-interaction system without boundary terms.
pub fn assemble_w_interior(v: &BlockMatrix, p: &Triple) -> Result<System> {
    let (n_b, bs) = (v.n_blocks(), v.block_size());
    check_bt("V", v, n_b, bs)?;
    Ok(System {
        m: assemble_w_lhs(v, &p.retarded)?,
        b_lesser: assemble_w_rhs(v, &p.lesser)?,
        b_greater: assemble_w_rhs(v, &p.greater)?,
    })
}

/// Screened-interaction system including boundary terms.
pub fn assemble_w_system(v: &BlockMatrix, p: &Triple, obc: Option<&BoundaryPair>) -> Result<System> {
    let mut sys = assemble_w_interior(v, p)?;
    if let Some(o) = obc {
        apply_boundary(&mut sys, o)?;
    }
    Ok(sys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt::Storage;
    use crate::linalg::{c64, eye, random_cmat, rel_err, zeros};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_bt(seed: u64, nb: usize, bs: usize, lg: bool) -> BlockMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BlockMatrix::zeros(nb, bs, 3, Storage::Full).unwrap();
        for (i, j) in m.stored_pattern() {
            m.set(i, j, random_cmat(&mut rng, bs, bs)).unwrap();
        }
        if lg {
            symmetrize_lg(&m)
        } else {
            m
        }
    }

    fn random_triple(seed: u64, nb: usize, bs: usize) -> Triple {
        Triple {
            retarded: random_bt(seed, nb, bs, false),
            lesser: random_bt(seed + 1, nb, bs, true),
            greater: random_bt(seed + 2, nb, bs, true),
        }
    }

    fn boundary(seed: u64, bs: usize) -> Boundary {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Boundary {
            retarded: random_cmat(&mut rng, bs, bs),
            lesser: random_cmat(&mut rng, bs, bs),
            greater: random_cmat(&mut rng, bs, bs),
        }
    }

    #[test]
    fn ballistic_system_is_e_minus_h() {
        let h = random_bt(1, 4, 2, false);
        let sys = assemble_g_system(0.7, &h, None, None).unwrap();
        let expect = eye(8) * c64(0.7, 0.0) - h.to_dense();
        assert!(rel_err(&sys.m.to_dense(), &expect) < 1e-15);
        assert_eq!(sys.b_lesser.to_dense(), zeros(8, 8));
    }

    #[test]
    fn zero_energy_and_hamiltonian_leave_minus_sigma() {
        let (nb, bs) = (3, 2);
        let h = BlockMatrix::zeros(nb, bs, 3, Storage::Full).unwrap();
        let s = random_triple(4, nb, bs);
        let obc = BoundaryPair { left: boundary(7, bs), right: boundary(8, bs) };
        let sys = assemble_g_system(0.0, &h, Some(&s), Some(&obc)).unwrap();
        let mut expect = -s.retarded.to_dense();
        let mut bl = s.lesser.to_dense();
        let n = nb * bs;
        for (o, b) in [(0, &obc.left), (n - bs, &obc.right)] {
            let mut v = expect.view_mut((o, o), (bs, bs));
            v -= &b.retarded;
            let mut w = bl.view_mut((o, o), (bs, bs));
            w += &b.lesser;
        }
        assert!(rel_err(&sys.m.to_dense(), &expect) < 1e-15);
        assert!(rel_err(&sys.b_lesser.to_dense(), &bl) < 1e-15);
    }

    #[test]
    fn w_products_have_bandwidth_five_and_seven() {
        let (nb, bs) = (6, 2);
        let v = random_bt(10, nb, bs, false);
        let p = random_triple(11, nb, bs);
        let (vpr, vpl, _) = w_products(&v, &p).unwrap();
        assert_eq!(vpr.bandwidth(), 5);
        assert_eq!(vpl.bandwidth(), 7);
        let vd = v.to_dense();
        assert!(rel_err(&vpr.to_dense(), &(&vd * p.retarded.to_dense())) < 1e-13);
        assert!(rel_err(&vpl.to_dense(), &(&vd * p.lesser.to_dense() * vd.adjoint())) < 1e-13);
        // the solver sees the tridiagonal part
        let sys = assemble_w_system(&v, &p, None).unwrap();
        let lhs = BlockMatrix::from_dense(&(eye(nb * bs) - &vd * p.retarded.to_dense()), nb, bs, 3, Storage::Full).unwrap();
        assert!(rel_err(&sys.m.to_dense(), &lhs.to_dense()) < 1e-13);
    }

    #[test]
    fn zero_polarization_leaves_identity_and_boundary() {
        let (nb, bs) = (4, 2);
        let v = random_bt(12, nb, bs, false);
        let p = Triple::zeros(nb, bs).unwrap();
        let obc = BoundaryPair { left: boundary(1, bs), right: boundary(2, bs) };
        let sys = assemble_w_system(&v, &p, Some(&obc)).unwrap();
        let mut expect = eye(nb * bs);
        {
            let mut c = expect.view_mut((0, 0), (bs, bs));
            c -= &obc.left.retarded;
        }
        assert!(rel_err(&sys.m.to_dense().view((0, 0), (bs, bs)).into_owned(), &expect.view((0, 0), (bs, bs)).into_owned()) < 1e-15);
        assert_eq!(sys.b_lesser.block(1, 1), zeros(bs, bs));
        assert_eq!(sys.b_lesser.block(0, 0), obc.left.lesser);
    }

    #[test]
    fn identity_interaction_passes_polarization_through() {
        let (nb, bs) = (4, 2);
        let v = BlockMatrix::identity(nb, bs).widen(3).unwrap();
        let p = random_triple(20, nb, bs);
        let sys = assemble_w_system(&v, &p, None).unwrap();
        assert!(rel_err(&sys.b_lesser.to_dense(), &p.lesser.to_dense()) < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let h = random_bt(1, 4, 2, false);
        let s = random_triple(2, 3, 2);
        assert!(assemble_g_system(0.0, &h, Some(&s), None).is_err());
    }
}
