//! Block-banded complex matrices.
//!
//! A [`BlockMatrix`] holds the dense blocks `(i, j)` with `|i - j| <= (b - 1) / 2`
//! where `b` is the (odd) block bandwidth. Lesser/greater quantities obey
//! `X_ij = -X_ji^H` and can be kept in [`Storage::LgCompressed`] mode where
//! only blocks with `j >= i` are stored.

pub mod device;
pub mod grid;

pub use grid::EnergyGrid;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::linalg::{adj, mm, zeros, CMat, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Storage {
    Full,
    LgCompressed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockMatrix {
    n_blocks: usize,
    block_size: usize,
    bandwidth: usize,
    storage: Storage,
    blocks: BTreeMap<(usize, usize), CMat>,
}

impl BlockMatrix {
    /// All-zero matrix with every block of the band allocated.
    pub fn zeros(n_blocks: usize, block_size: usize, bandwidth: usize, storage: Storage) -> Result<Self> {
        if n_blocks == 0 {
            return Err(Error::Shape("n_blocks must be positive".into()));
        }
        if bandwidth % 2 == 0 || bandwidth > 2 * n_blocks - 1 {
            return Err(Error::Shape(format!(
                "block bandwidth {bandwidth} must be odd and <= {}",
                2 * n_blocks - 1
            )));
        }
        let mut m = BlockMatrix {
            n_blocks,
            block_size,
            bandwidth,
            storage,
            blocks: BTreeMap::new(),
        };
        for (i, j) in m.stored_pattern() {
            m.blocks.insert((i, j), zeros(block_size, block_size));
        }
        Ok(m)
    }

    pub fn identity(n_blocks: usize, block_size: usize) -> Self {
        let mut m = Self::zeros(n_blocks, block_size, 1, Storage::Full).expect("valid shape");
        for i in 0..n_blocks {
            m.blocks.insert((i, i), CMat::identity(block_size, block_size));
        }
        m
    }

    /// Block-tridiagonal matrix from its diagonal, upper and lower blocks.
    pub fn from_tridiagonal(diag: Vec<CMat>, upper: Vec<CMat>, lower: Vec<CMat>) -> Result<Self> {
        let n = diag.len();
        if n == 0 || upper.len() + 1 != n || lower.len() + 1 != n {
            return Err(Error::Shape(format!(
                "tridiagonal parts have lengths {}, {}, {}",
                n,
                upper.len(),
                lower.len()
            )));
        }
        let bs = diag[0].nrows();
        let bw = if n == 1 { 1 } else { 3 };
        let mut m = Self::zeros(n, bs, bw, Storage::Full)?;
        for (i, d) in diag.into_iter().enumerate() {
            m.set(i, i, d)?;
        }
        for (i, u) in upper.into_iter().enumerate() {
            m.set(i, i + 1, u)?;
        }
        for (i, l) in lower.into_iter().enumerate() {
            m.set(i + 1, i, l)?;
        }
        Ok(m)
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn half_bandwidth(&self) -> usize {
        (self.bandwidth - 1) / 2
    }

    pub fn storage(&self) -> Storage {
        self.storage
    }

    pub fn dim(&self) -> usize {
        self.n_blocks * self.block_size
    }

    pub fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n_blocks && j < self.n_blocks && i.abs_diff(j) <= self.half_bandwidth()
    }

    /// Block coordinates that are physically stored, row-major.
    pub fn stored_pattern(&self) -> Vec<(usize, usize)> {
        let hb = self.half_bandwidth();
        let mut out = Vec::new();
        for i in 0..self.n_blocks {
            let lo = match self.storage {
                Storage::Full => i.saturating_sub(hb),
                Storage::LgCompressed => i,
            };
            let hi = (i + hb).min(self.n_blocks - 1);
            for j in lo..=hi {
                out.push((i, j));
            }
        }
        out
    }

    pub fn stored_block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Direct reference to a stored block.
    pub fn stored(&self, i: usize, j: usize) -> Option<&CMat> {
        self.blocks.get(&(i, j))
    }

    pub fn stored_mut(&mut self, i: usize, j: usize) -> Option<&mut CMat> {
        self.blocks.get_mut(&(i, j))
    }

    /// Logical block `(i, j)`; zero outside the band.
    pub fn block(&self, i: usize, j: usize) -> CMat {
        if !self.in_band(i, j) {
            return zeros(self.block_size, self.block_size);
        }
        match self.blocks.get(&(i, j)) {
            Some(b) => b.clone(),
            None => -adj(&self.blocks[&(j, i)]),
        }
    }

    /// Sets logical block `(i, j)`. In compressed mode a lower block is stored
    /// as `-b^H` in its upper mirror.
    pub fn set(&mut self, i: usize, j: usize, b: CMat) -> Result<()> {
        if !self.in_band(i, j) {
            return Err(Error::Shape(format!(
                "block ({i},{j}) outside bandwidth {} of {} blocks",
                self.bandwidth, self.n_blocks
            )));
        }
        if b.shape() != (self.block_size, self.block_size) {
            return Err(Error::Shape(format!(
                "block shape {:?} != ({bs}, {bs})",
                b.shape(),
                bs = self.block_size
            )));
        }
        if self.storage == Storage::LgCompressed && j < i {
            self.blocks.insert((j, i), -adj(&b));
        } else {
            self.blocks.insert((i, j), b);
        }
        Ok(())
    }

    /// Logical scalar entry at global row/column.
    pub fn entry(&self, r: usize, c: usize) -> C64 {
        let bs = self.block_size;
        let (i, j) = (r / bs, c / bs);
        if !self.in_band(i, j) {
            return C64::new(0.0, 0.0);
        }
        match self.blocks.get(&(i, j)) {
            Some(b) => b[(r % bs, c % bs)],
            None => -self.blocks[&(j, i)][(c % bs, r % bs)].conj(),
        }
    }

    pub fn to_dense(&self) -> CMat {
        let n = self.dim();
        let bs = self.block_size;
        let mut d = zeros(n, n);
        for i in 0..self.n_blocks {
            for j in 0..self.n_blocks {
                if self.in_band(i, j) {
                    d.view_mut((i * bs, j * bs), (bs, bs)).copy_from(&self.block(i, j));
                }
            }
        }
        d
    }

    /// Copies the band of `d` into a block matrix; entries outside the band are dropped.
    pub fn from_dense(d: &CMat, n_blocks: usize, block_size: usize, bandwidth: usize, storage: Storage) -> Result<Self> {
        if d.shape() != (n_blocks * block_size, n_blocks * block_size) {
            return Err(Error::Shape(format!(
                "dense shape {:?} does not match {n_blocks} blocks of size {block_size}",
                d.shape()
            )));
        }
        let mut m = Self::zeros(n_blocks, block_size, bandwidth, storage)?;
        for (i, j) in m.stored_pattern() {
            let blk = d.view((i * block_size, j * block_size), (block_size, block_size)).into_owned();
            m.blocks.insert((i, j), blk);
        }
        Ok(m)
    }

    /// Same logical matrix with full storage.
    pub fn to_full(&self) -> Self {
        if self.storage == Storage::Full {
            return self.clone();
        }
        let mut m = Self::zeros(self.n_blocks, self.block_size, self.bandwidth, Storage::Full).expect("valid shape");
        for (i, j) in m.stored_pattern() {
            m.blocks.insert((i, j), self.block(i, j));
        }
        m
    }

    /// Drops the lower blocks; the caller asserts the matrix is ≶-symmetric.
    pub fn to_compressed(&self) -> Self {
        let mut m = self.clone();
        m.storage = Storage::LgCompressed;
        m.blocks.retain(|&(i, j), _| j >= i);
        m
    }

    /// Copy restricted to a narrower band.
    pub fn truncate(&self, bandwidth: usize) -> Result<Self> {
        let mut m = Self::zeros(self.n_blocks, self.block_size, bandwidth, self.storage)?;
        for (i, j) in m.stored_pattern() {
            m.blocks.insert((i, j), self.block(i, j));
        }
        Ok(m)
    }

    /// Copy embedded in a wider band, new blocks zero.
    pub fn widen(&self, bandwidth: usize) -> Result<Self> {
        let mut m = Self::zeros(self.n_blocks, self.block_size, bandwidth, self.storage)?;
        for (i, j) in m.stored_pattern() {
            if self.in_band(i, j) {
                m.blocks.insert((i, j), self.block(i, j));
            }
        }
        Ok(m)
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.n_blocks, self.block_size, self.bandwidth, Storage::Full).expect("valid shape");
        for (i, j) in m.stored_pattern() {
            m.blocks.insert((i, j), adj(&self.block(j, i)));
        }
        m
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut m = self.clone();
        for b in m.blocks.values_mut() {
            *b *= s;
        }
        m
    }

    /// `self + s * other`, with the band of the wider operand. Result uses full
    /// storage unless both operands are compressed.
    pub fn axpy(&self, s: C64, other: &BlockMatrix) -> Result<Self> {
        self.check_compatible(other)?;
        let storage = if self.storage == Storage::LgCompressed && other.storage == Storage::LgCompressed && s.im == 0.0 {
            Storage::LgCompressed
        } else {
            Storage::Full
        };
        let bw = self.bandwidth.max(other.bandwidth);
        let mut m = Self::zeros(self.n_blocks, self.block_size, bw, storage)?;
        for (i, j) in m.stored_pattern() {
            let mut b = self.block(i, j);
            if other.in_band(i, j) {
                b += other.block(i, j) * s;
            }
            m.blocks.insert((i, j), b);
        }
        Ok(m)
    }

    pub fn add(&self, other: &BlockMatrix) -> Result<Self> {
        self.axpy(C64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &BlockMatrix) -> Result<Self> {
        self.axpy(C64::new(-1.0, 0.0), other)
    }

    fn check_compatible(&self, other: &BlockMatrix) -> Result<()> {
        if self.n_blocks != other.n_blocks || self.block_size != other.block_size {
            return Err(Error::Shape(format!(
                "{}x{} blocks vs {}x{} blocks",
                self.n_blocks, self.block_size, other.n_blocks, other.block_size
            )));
        }
        Ok(())
    }

    /// Maximum over blocks of `||X_ij + X_ji^H||_F`.
    pub fn lg_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n_blocks {
            for j in i..self.n_blocks {
                if self.in_band(i, j) {
                    let d = self.block(i, j) + adj(&self.block(j, i));
                    worst = worst.max(d.norm());
                }
            }
        }
        worst
    }

    /// Iterator over the stored blocks.
    pub fn iter_stored(&self) -> impl Iterator<Item = (&(usize, usize), &CMat)> {
        self.blocks.iter()
    }
}

/// Product of two block-banded matrices; the bandwidth grows to `p + q - 1`.
pub fn bt_multiply(a: &BlockMatrix, b: &BlockMatrix) -> Result<BlockMatrix> {
    a.check_compatible(b)?;
    let nb = a.n_blocks;
    let bw = (a.bandwidth + b.bandwidth - 1).min(2 * nb - 1);
    let mut c = BlockMatrix::zeros(nb, a.block_size, bw, Storage::Full)?;
    let (ha, hb) = (a.half_bandwidth(), b.half_bandwidth());
    for (i, j) in c.stored_pattern() {
        let acc = c.blocks.get_mut(&(i, j)).expect("allocated");
        let lo = i.saturating_sub(ha).max(j.saturating_sub(hb));
        let hi = (i + ha).min(j + hb).min(nb - 1);
        for k in lo..=hi {
            *acc += mm(&a.block(i, k), &b.block(k, j));
        }
    }
    Ok(c)
}

/// Projects onto `X_ij = -X_ji^H` via `(X_ij - X_ji^H) / 2`.
///
/// Only the upper half is computed; each lower block is the exact negated
/// adjoint of its mirror, so the symmetry holds bitwise. The result uses full
/// storage.
pub fn symmetrize_lg(x: &BlockMatrix) -> BlockMatrix {
    let mut out = BlockMatrix::zeros(x.n_blocks, x.block_size, x.bandwidth, Storage::Full).expect("valid shape");
    let hb = x.half_bandwidth();
    for i in 0..x.n_blocks {
        for j in i..=(i + hb).min(x.n_blocks - 1) {
            let u = (x.block(i, j) - adj(&x.block(j, i))) * C64::new(0.5, 0.0);
            if i != j {
                out.blocks.insert((j, i), -adj(&u));
            }
            out.blocks.insert((i, j), u);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_cmat;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_banded(seed: u64, nb: usize, bs: usize, bw: usize) -> BlockMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = BlockMatrix::zeros(nb, bs, bw, Storage::Full).unwrap();
        for (i, j) in m.stored_pattern() {
            m.set(i, j, random_cmat(&mut rng, bs, bs)).unwrap();
        }
        m
    }

    #[test]
    fn dense_round_trip() {
        let a = random_banded(1, 5, 3, 3);
        let d = a.to_dense();
        let b = BlockMatrix::from_dense(&d, 5, 3, 3, Storage::Full).unwrap();
        assert_eq!(a, b);
        let z = BlockMatrix::zeros(3, 2, 3, Storage::Full).unwrap();
        assert_eq!(z.to_dense(), zeros(6, 6));
    }

    #[test]
    fn even_bandwidth_rejected() {
        assert!(BlockMatrix::zeros(4, 2, 2, Storage::Full).is_err());
        assert!(BlockMatrix::zeros(2, 2, 5, Storage::Full).is_err());
    }

    #[test]
    fn compressed_storage_halves_off_diagonal_blocks() {
        let x = symmetrize_lg(&random_banded(2, 6, 3, 3));
        let c = x.to_compressed();
        assert_eq!(c.stored_block_count(), 6 + 5);
        assert_eq!(x.stored_block_count(), 6 + 2 * 5);
        assert_eq!(c.to_dense(), x.to_dense());
        assert_eq!(c.to_full(), x);
    }

    #[test]
    fn symmetrize_matches_entry_formula() {
        let x = random_banded(3, 4, 3, 3);
        let s = symmetrize_lg(&x);
        let (dx, ds) = (x.to_dense(), s.to_dense());
        let n = dx.nrows();
        for r in 0..n {
            for c in 0..n {
                if x.in_band(r / 3, c / 3) {
                    let want = (dx[(r, c)] - dx[(c, r)].conj()) * 0.5;
                    assert_eq!(ds[(r, c)], want);
                }
            }
        }
    }

    #[test]
    fn symmetrize_zero_and_fixed_points() {
        let z = BlockMatrix::zeros(3, 2, 3, Storage::Full).unwrap();
        assert_eq!(symmetrize_lg(&z), z);
        let s = symmetrize_lg(&random_banded(9, 4, 2, 3));
        assert_eq!(symmetrize_lg(&s), s);
    }

    #[test]
    fn multiply_bandwidth_growth() {
        let a = random_banded(4, 6, 2, 3);
        let b = random_banded(5, 6, 2, 3);
        let ab = bt_multiply(&a, &b).unwrap();
        assert_eq!(ab.bandwidth(), 5);
        let abc = bt_multiply(&ab, &b).unwrap();
        assert_eq!(abc.bandwidth(), 7);
        let i = BlockMatrix::identity(6, 2);
        assert_eq!(bt_multiply(&i, &a).unwrap().to_dense(), a.to_dense());
    }

    #[test]
    fn multiply_matches_dense() {
        let a = random_banded(6, 5, 4, 3);
        let b = random_banded(7, 5, 4, 3);
        let ab = bt_multiply(&a, &b).unwrap();
        let want = a.to_dense() * b.to_dense();
        assert!((ab.to_dense() - &want).norm() / want.norm() < 1e-12);
    }

    #[test]
    fn multiply_shape_mismatch() {
        let a = random_banded(6, 5, 4, 3);
        let b = random_banded(7, 4, 4, 3);
        assert!(matches!(bt_multiply(&a, &b), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn prop_multiply_associates_with_dense(seed in 0u64..1000, nb in 2usize..7, bs in 1usize..5, p in 0usize..2, q in 0usize..2) {
            let (p, q) = ((2 * p + 1).min(2 * nb - 1), (2 * q + 3).min(2 * nb - 1));
            let a = random_banded(seed, nb, bs, p);
            let b = random_banded(seed + 7, nb, bs, q);
            let ab = bt_multiply(&a, &b).unwrap();
            let want = a.to_dense() * b.to_dense();
            prop_assert!((ab.to_dense() - &want).norm() <= 1e-12 * want.norm().max(1e-300));
        }

        #[test]
        fn prop_symmetrize_is_exact_projection(seed in 0u64..1000, nb in 1usize..6, bs in 1usize..4) {
            let bw = if nb == 1 { 1 } else { 3 };
            let s = symmetrize_lg(&random_banded(seed, nb, bs, bw));
            prop_assert_eq!(s.lg_defect(), 0.0);
            prop_assert_eq!(symmetrize_lg(&s), s.clone());
            prop_assert_eq!(s.to_compressed().to_full(), s);
        }
    }
}
