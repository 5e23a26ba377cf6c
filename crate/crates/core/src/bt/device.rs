//! Device description in terms of primitive unit cells and its mapping onto
//! block-tridiagonal transport-cell matrices.

use crate::bt::{BlockMatrix, Storage};
use crate::error::{Error, Result};
use crate::linalg::{adj, zeros, CMat, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subsystem {
    G,
    W,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Operator {
    Hamiltonian,
    Coulomb,
}

/// Primitive-cell description of a quasi-1D device.
///
/// `puc_h[k]` is the coupling `h_{i,i+k}` between primitive cell `i` and cell
/// `i + k`; the lower couplings follow from Hermiticity. `puc_v` has the same
/// layout for the bare Coulomb matrix. Cells are repeated along x with
/// period `cell_length`.
#[derive(Clone, Debug)]
pub struct DeviceSpec {
    pub n_orb_puc: usize,
    pub n_u_g: usize,
    pub n_u_w: usize,
    /// Number of transport cells of the G subsystem.
    pub n_b: usize,
    pub puc_h: Vec<CMat>,
    pub puc_v: Vec<CMat>,
    pub positions: Vec<[f64; 3]>,
    pub cell_length: f64,
    pub r_cut: f64,
}

impl DeviceSpec {
    pub fn n_puc(&self) -> usize {
        self.n_b * self.n_u_g
    }

    pub fn n_ao(&self) -> usize {
        self.n_puc() * self.n_orb_puc
    }

    pub fn n_u(&self, sub: Subsystem) -> usize {
        match sub {
            Subsystem::G => self.n_u_g,
            Subsystem::W => self.n_u_w,
        }
    }

    pub fn block_size(&self, sub: Subsystem) -> usize {
        self.n_orb_puc * self.n_u(sub)
    }

    pub fn n_blocks(&self, sub: Subsystem) -> Result<usize> {
        let bs = self.block_size(sub);
        if bs == 0 || self.n_ao() % bs != 0 {
            return Err(Error::Grouping(format!(
                "N_AO = {} is not divisible by N_BS = {bs} ({sub:?} subsystem)",
                self.n_ao()
            )));
        }
        Ok(self.n_ao() / bs)
    }

    pub fn primitive_blocks(&self, which: Operator) -> &[CMat] {
        match which {
            Operator::Hamiltonian => &self.puc_h,
            Operator::Coulomb => &self.puc_v,
        }
    }

    /// Checks shapes, Hermiticity of the on-site blocks and coupling ranges.
    pub fn validate(&self, herm_tol: f64) -> Result<()> {
        let n = self.n_orb_puc;
        if n == 0 || self.n_u_g == 0 || self.n_u_w == 0 {
            return Err(Error::InvalidInput("grouping counts must be positive".into()));
        }
        if self.n_b < 1 {
            return Err(Error::InvalidInput("n_b must be positive".into()));
        }
        if self.positions.len() != n {
            return Err(Error::InvalidInput(format!(
                "{} orbital positions for {n} orbitals per cell",
                self.positions.len()
            )));
        }
        if !(self.cell_length > 0.0) || !(self.r_cut > 0.0) {
            return Err(Error::InvalidInput("cell_length and r_cut must be positive".into()));
        }
        for (name, blocks, n_u) in [
            ("hamiltonian", &self.puc_h, self.n_u_g),
            ("coulomb", &self.puc_v, self.n_u_w),
        ] {
            if blocks.is_empty() {
                return Err(Error::InvalidInput(format!("{name}: no on-site block")));
            }
            if blocks.len() - 1 > n_u {
                return Err(Error::Grouping(format!(
                    "{name}: coupling range {} exceeds N_U = {n_u}",
                    blocks.len() - 1
                )));
            }
            for b in blocks.iter() {
                if b.shape() != (n, n) {
                    return Err(Error::Shape(format!("{name}: block shape {:?}, expected ({n}, {n})", b.shape())));
                }
            }
            let h0 = &blocks[0];
            let defect = (h0 - adj(h0)).norm();
            if defect > herm_tol * h0.norm().max(1.0) {
                return Err(Error::InvalidInput(format!("{name}: on-site block not Hermitian (defect {defect:.3e})")));
            }
        }
        self.n_blocks(Subsystem::G)?;
        self.n_blocks(Subsystem::W)?;
        Ok(())
    }

    /// Positions of all N_AO orbitals.
    pub fn all_positions(&self) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(self.n_ao());
        for c in 0..self.n_puc() {
            for p in &self.positions {
                out.push([p[0] + c as f64 * self.cell_length, p[1], p[2]]);
            }
        }
        out
    }

    /// Dense N_AO x N_AO matrix obtained by tiling the primitive blocks.
    pub fn dense_tiled(&self, which: Operator) -> CMat {
        let blocks = self.primitive_blocks(which);
        let n = self.n_orb_puc;
        let mut d = zeros(self.n_ao(), self.n_ao());
        for c in 0..self.n_puc() {
            for (k, b) in blocks.iter().enumerate() {
                if c + k >= self.n_puc() {
                    break;
                }
                d.view_mut((c * n, (c + k) * n), (n, n)).copy_from(b);
                if k > 0 {
                    d.view_mut(((c + k) * n, c * n), (n, n)).copy_from(&adj(b));
                }
            }
        }
        d
    }

    /// Primitive blocks `m_{-K}..m_{K}` of `-op` for lead analysis, i.e. the
    /// Laurent coefficients of a periodic operator seen from one cell.
    pub fn primitive_laurent(&self, which: Operator) -> Vec<CMat> {
        let blocks = self.primitive_blocks(which);
        let k = blocks.len() - 1;
        let mut out = Vec::with_capacity(2 * k + 1);
        for d in (1..=k).rev() {
            out.push(adj(&blocks[d]));
        }
        out.extend(blocks.iter().cloned());
        out
    }
}

/// Maps the primitive blocks onto the transport-cell block-tridiagonal matrix.
pub fn assemble_from_puc(spec: &DeviceSpec, which: Operator, sub: Subsystem) -> Result<BlockMatrix> {
    let nb = spec.n_blocks(sub)?;
    let bs = spec.block_size(sub);
    let n_u = spec.n_u(sub);
    let blocks = spec.primitive_blocks(which);
    if blocks.len() - 1 > n_u {
        return Err(Error::Grouping(format!(
            "coupling range {} exceeds N_U = {n_u}",
            blocks.len() - 1
        )));
    }
    let n = spec.n_orb_puc;
    let bw = if nb == 1 { 1 } else { 3 };
    let mut m = BlockMatrix::zeros(nb, bs, bw, Storage::Full)?;
    let n_puc = spec.n_puc();
    for c in 0..n_puc {
        for (k, b) in blocks.iter().enumerate() {
            let c2 = c + k;
            if c2 >= n_puc {
                break;
            }
            let (bi, bj) = (c / n_u, c2 / n_u);
            let (oi, oj) = ((c % n_u) * n, (c2 % n_u) * n);
            m.stored_mut(bi, bj)
                .expect("coupling within one transport cell")
                .view_mut((oi, oj), (n, n))
                .copy_from(b);
            if k > 0 {
                m.stored_mut(bj, bi)
                    .expect("coupling within one transport cell")
                    .view_mut((oj, oi), (n, n))
                    .copy_from(&adj(b));
            }
        }
    }
    Ok(m)
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Zeroes entry `(i, j)` of `m` wherever `|R_i - R_j| > r_cut`.
pub fn apply_rcut(m: &BlockMatrix, positions: &[[f64; 3]], r_cut: f64) -> Result<BlockMatrix> {
    if !(r_cut > 0.0) {
        return Err(Error::InvalidInput(format!("r_cut must be positive, got {r_cut}")));
    }
    if positions.len() != m.dim() {
        return Err(Error::Shape(format!(
            "{} positions for a matrix of dimension {}",
            positions.len(),
            m.dim()
        )));
    }
    let bs = m.block_size();
    let mut out = m.clone();
    for (i, j) in m.stored_pattern() {
        let blk = out.stored_mut(i, j).expect("stored");
        for r in 0..bs {
            for c in 0..bs {
                if dist(&positions[i * bs + r], &positions[j * bs + c]) > r_cut {
                    blk[(r, c)] = C64::new(0.0, 0.0);
                }
            }
        }
    }
    Ok(out)
}

/// Dense variant of [`apply_rcut`].
pub fn apply_rcut_dense(d: &CMat, positions: &[[f64; 3]], r_cut: f64) -> Result<CMat> {
    if !(r_cut > 0.0) {
        return Err(Error::InvalidInput(format!("r_cut must be positive, got {r_cut}")));
    }
    let mut out = d.clone();
    for r in 0..d.nrows() {
        for c in 0..d.ncols() {
            if dist(&positions[r], &positions[c]) > r_cut {
                out[(r, c)] = C64::new(0.0, 0.0);
            }
        }
    }
    Ok(out)
}

/// For every orbital, the sorted list of orbitals within `r_cut`.
///
/// Uses a sweep over orbitals sorted by x, so it stays cheap for thousands
/// of orbitals.
pub fn rcut_neighbours(positions: &[[f64; 3]], r_cut: f64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&a, &b| positions[a][0].total_cmp(&positions[b][0]));
    let mut out = vec![Vec::new(); positions.len()];
    for (k, &a) in order.iter().enumerate() {
        for &b in &order[k..] {
            if positions[b][0] - positions[a][0] > r_cut {
                break;
            }
            if dist(&positions[a], &positions[b]) <= r_cut {
                out[a].push(b);
                if a != b {
                    out[b].push(a);
                }
            }
        }
    }
    for row in &mut out {
        row.sort_unstable();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, random_cmat, random_hermitian};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spec(seed: u64, n_orb: usize, n_u: usize, n_b: usize) -> DeviceSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut puc_h = vec![random_hermitian(&mut rng, n_orb)];
        let mut puc_v = vec![random_hermitian(&mut rng, n_orb)];
        for _ in 0..n_u {
            puc_h.push(random_cmat(&mut rng, n_orb, n_orb));
            puc_v.push(random_cmat(&mut rng, n_orb, n_orb));
        }
        DeviceSpec {
            n_orb_puc: n_orb,
            n_u_g: n_u,
            n_u_w: n_u,
            n_b,
            puc_h,
            puc_v,
            positions: (0..n_orb).map(|i| [0.3 * i as f64, 0.1 * i as f64, 0.0]).collect(),
            cell_length: 1.0,
            r_cut: 2.5,
        }
    }

    #[test]
    fn nw1_dimensions() {
        let spec = DeviceSpec {
            n_orb_puc: 104,
            n_u_g: 4,
            n_u_w: 4,
            n_b: 18,
            puc_h: vec![],
            puc_v: vec![],
            positions: vec![],
            cell_length: 1.0,
            r_cut: 10.95,
        };
        assert_eq!(spec.block_size(Subsystem::G), 416);
        assert_eq!(spec.n_ao(), 7488);
        assert_eq!(spec.n_blocks(Subsystem::G).unwrap(), 18);
    }

    #[test]
    fn ungrouped_chain() {
        let h0 = CMat::from_element(1, 1, c64(0.5, 0.0));
        let h1 = CMat::from_element(1, 1, c64(-1.0, 0.2));
        let mut spec = random_spec(0, 1, 1, 2);
        spec.puc_h = vec![h0.clone(), h1.clone()];
        let m = assemble_from_puc(&spec, Operator::Hamiltonian, Subsystem::G).unwrap();
        assert_eq!(m.block(0, 0), h0);
        assert_eq!(m.block(0, 1), h1);
        assert_eq!(m.block(1, 0), adj(&h1));
    }

    #[test]
    fn grouping_matches_dense_tiling() {
        let spec = random_spec(1, 3, 2, 4);
        let m = assemble_from_puc(&spec, Operator::Hamiltonian, Subsystem::G).unwrap();
        assert_eq!(m.block_size(), 6);
        assert_eq!(m.to_dense(), spec.dense_tiled(Operator::Hamiltonian));
        let d = m.to_dense();
        assert_eq!((&d - adj(&d)).norm(), 0.0);
    }

    #[test]
    fn grouping_mismatch_is_an_error() {
        let mut spec = random_spec(2, 2, 2, 3);
        spec.n_u_w = 4;
        spec.puc_v.truncate(2);
        assert!(matches!(spec.n_blocks(Subsystem::W), Err(Error::Grouping(_))));
        assert!(assemble_from_puc(&spec, Operator::Coulomb, Subsystem::W).is_err());
    }

    #[test]
    fn rcut_limits() {
        let spec = random_spec(3, 2, 1, 4);
        let m = assemble_from_puc(&spec, Operator::Coulomb, Subsystem::G).unwrap();
        let pos = spec.all_positions();
        assert_eq!(apply_rcut(&m, &pos, f64::INFINITY).unwrap(), m);
        let tiny = apply_rcut(&m, &pos, 1e-9).unwrap().to_dense();
        for r in 0..tiny.nrows() {
            for c in 0..tiny.ncols() {
                if r != c {
                    assert_eq!(tiny[(r, c)], c64(0.0, 0.0));
                }
            }
        }
        assert!(apply_rcut(&m, &pos, 0.0).is_err());
    }

    #[test]
    fn rcut_monotone_and_matches_dense() {
        let spec = random_spec(4, 3, 2, 3);
        let m = assemble_from_puc(&spec, Operator::Coulomb, Subsystem::G).unwrap();
        let pos = spec.all_positions();
        let mut prev: Option<CMat> = None;
        for r in [0.5, 1.0, 1.7, 2.5, 4.0] {
            let a = apply_rcut(&m, &pos, r).unwrap().to_dense();
            assert_eq!(a, apply_rcut_dense(&m.to_dense(), &pos, r).unwrap());
            if let Some(p) = prev {
                for (x, y) in p.iter().zip(a.iter()) {
                    assert!(*x == c64(0.0, 0.0) || *y != c64(0.0, 0.0));
                }
            }
            prev = Some(a);
        }
    }

    #[test]
    fn neighbour_sweep_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        let pos: Vec<[f64; 3]> = (0..300)
            .map(|_| [rng.gen_range(0.0..40.0), rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0)])
            .collect();
        let fast = rcut_neighbours(&pos, 3.0);
        for i in 0..pos.len() {
            let brute: Vec<usize> = (0..pos.len()).filter(|&j| dist(&pos[i], &pos[j]) <= 3.0).collect();
            assert_eq!(fast[i], brute);
        }
    }
}
