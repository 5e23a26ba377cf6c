//! Entry sets and the transposition between energy-major and entry-major
//! distributions.
//!
//! In energy-major layout a worker holds every entry for a contiguous slice
//! of energies; in entry-major layout it holds every energy for a contiguous
//! slice of entries. Lesser/greater quantities are anti-Hermitian, so only
//! the upper-triangular entries of the block-tridiagonal pattern travel, and
//! of a diagonal entry only its imaginary part: exactly half the bytes of
//! full storage.

use std::ops::Range;

use serde::Serialize;

use super::convolve::Spectra;
use crate::bt::{BlockMatrix, Storage};
use crate::dist::comm::{Communicator, Packet};
use crate::error::{Error, Result};
use crate::linalg::{zeros, C64};
use crate::rgf::LgBlocks;

/// Contiguous near-equal split of `n` items over `size` workers.
pub fn split(n: usize, size: usize, rank: usize) -> Range<usize> {
    let base = n / size;
    let rem = n % size;
    let start = rank * base + rank.min(rem);
    start..start + base + usize::from(rank < rem)
}

/// Upper-triangular entries `(r, c)`, `r <= c`, of a block-tridiagonal
/// pattern, in global orbital coordinates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntrySet {
    pub n_b: usize,
    pub bs: usize,
    pub entries: Vec<(usize, usize)>,
}

impl EntrySet {
    pub fn block_tridiagonal(n_b: usize, bs: usize) -> Self {
        let mut entries = Vec::new();
        for i in 0..n_b {
            for r in 0..bs {
                for c in r..bs {
                    entries.push((i * bs + r, i * bs + c));
                }
            }
            if i + 1 < n_b {
                for r in 0..bs {
                    for c in 0..bs {
                        entries.push((i * bs + r, (i + 1) * bs + c));
                    }
                }
            }
        }
        EntrySet { n_b, bs, entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of entries of the full (both triangles) pattern.
    pub fn full_len(&self) -> usize {
        2 * self.entries.len() - self.n_b * self.bs
    }

    pub fn is_diagonal(&self, k: usize) -> bool {
        let (r, c) = self.entries[k];
        r == c
    }
}

/// Values of an anti-Hermitian quantity on the entry set, from its diagonal
/// and upper blocks; the blocks may use any block size that covers the set.
pub fn lg_values(x: &LgBlocks, bs: usize, set: &EntrySet) -> Vec<C64> {
    set.entries
        .iter()
        .map(|&(r, c)| {
            let (bi, bj) = (r / bs, c / bs);
            if bi == bj {
                x.diag[bi][(r % bs, c % bs)]
            } else if bj == bi + 1 {
                x.upper[bi][(r % bs, c % bs)]
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect()
}

/// Values of a block matrix on the entry set (`lower = true` reads `(c, r)`).
pub fn matrix_values(x: &BlockMatrix, set: &EntrySet, lower: bool) -> Vec<C64> {
    set.entries
        .iter()
        .map(|&(r, c)| if lower { x.entry(c, r) } else { x.entry(r, c) })
        .collect()
}

fn empty_bt(n_b: usize, bs: usize) -> Result<BlockMatrix> {
    let mut m = BlockMatrix::zeros(n_b, bs, if n_b == 1 { 1 } else { 3 }, Storage::Full)?;
    for (i, j) in m.stored_pattern() {
        m.set(i, j, zeros(bs, bs))?;
    }
    Ok(m)
}

fn write(blocks: &mut std::collections::BTreeMap<(usize, usize), crate::linalg::CMat>, bs: usize, r: usize, c: usize, v: C64) {
    let b = blocks.entry((r / bs, c / bs)).or_insert_with(|| zeros(bs, bs));
    b[(r % bs, c % bs)] = v;
}

/// Anti-Hermitian block matrix (block size `bs`, block-tridiagonal) from its
/// upper entries: `X_rc = v`, `X_cr = -conj(v)`.
pub fn lg_matrix(set: &EntrySet, values: &[C64], n_b: usize, bs: usize) -> Result<BlockMatrix> {
    let mut blocks = std::collections::BTreeMap::new();
    for (&(r, c), &v) in set.entries.iter().zip(values) {
        write(&mut blocks, bs, r, c, v);
        if r != c {
            write(&mut blocks, bs, c, r, -v.conj());
        }
    }
    fill(blocks, n_b, bs)
}

/// Block matrix from upper values `X_rc` and transposed values `X_cr`.
pub fn full_matrix(set: &EntrySet, upper: &[C64], lower: &[C64], n_b: usize, bs: usize) -> Result<BlockMatrix> {
    let mut blocks = std::collections::BTreeMap::new();
    for ((&(r, c), &u), &l) in set.entries.iter().zip(upper).zip(lower) {
        write(&mut blocks, bs, r, c, u);
        if r != c {
            write(&mut blocks, bs, c, r, l);
        }
    }
    fill(blocks, n_b, bs)
}

fn fill(blocks: std::collections::BTreeMap<(usize, usize), crate::linalg::CMat>, n_b: usize, bs: usize) -> Result<BlockMatrix> {
    let mut m = empty_bt(n_b, bs)?;
    for ((i, j), b) in blocks {
        if !m.in_band(i, j) {
            return Err(Error::Shape(format!("entry block ({i},{j}) outside the tridiagonal band")));
        }
        m.set(i, j, b)?;
    }
    Ok(m)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Packing {
    /// Anti-Hermitian: diagonal entries travel as their imaginary part.
    Lg,
    Full,
}

/// Byte counters of the transpositions performed by one worker.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct TransposeStats {
    pub lg_bytes: u64,
    /// What the lesser/greater traffic would have cost in full storage.
    pub lg_full_bytes: u64,
    pub other_bytes: u64,
    pub calls: u64,
}

impl TransposeStats {
    pub fn merge(&mut self, o: &TransposeStats) {
        self.lg_bytes += o.lg_bytes;
        self.lg_full_bytes += o.lg_full_bytes;
        self.other_bytes += o.other_bytes;
        self.calls += o.calls;
    }

    pub fn lg_fraction(&self) -> f64 {
        self.lg_bytes as f64 / self.lg_full_bytes as f64
    }
}

const TAG_TO_ENTRY: u64 = 0x7401;
const TAG_TO_ENERGY: u64 = 0x7402;

fn pack(p: &mut Packet, v: C64, diag: bool, packing: Packing) {
    if packing == Packing::Lg && diag {
        p.reals.push(v.im);
    } else {
        p.data.push(v);
    }
}

struct Reader<'a> {
    p: &'a Packet,
    d: usize,
    r: usize,
}

impl Reader<'_> {
    fn next(&mut self, diag: bool, packing: Packing) -> Result<C64> {
        if packing == Packing::Lg && diag {
            let v = *self.p.reals.get(self.r).ok_or_else(|| Error::Comm("short transposition packet".into()))?;
            self.r += 1;
            Ok(C64::new(0.0, v))
        } else {
            let v = *self.p.data.get(self.d).ok_or_else(|| Error::Comm("short transposition packet".into()))?;
            self.d += 1;
            Ok(v)
        }
    }
}

/// Updates the counters for one outgoing packet carrying `n_energies`
/// energies of `ents` entries per quantity.
fn account(stats: &mut TransposeStats, set: &EntrySet, ents: Range<usize>, p: &Packet, packings: &[Packing], n_energies: usize) {
    let n_lg = packings.iter().filter(|&&k| k == Packing::Lg).count() as u64;
    let n_other = packings.len() as u64 - n_lg;
    let other = n_other * (ents.len() * n_energies) as u64 * 16;
    let full: u64 = ents.map(|k| if set.is_diagonal(k) { 1 } else { 2 }).sum();
    stats.other_bytes += other;
    stats.lg_bytes += p.payload_bytes() - other;
    stats.lg_full_bytes += n_lg * n_energies as u64 * 16 * full;
}

/// Moves quantities from energy-major to entry-major layout.
///
/// `local[q][e]` holds the values of quantity `q` at the `e`-th energy of this
/// worker's slice, on the whole entry set. Returns, per quantity, the spectra
/// of this worker's entry slice on all `n_e` energies.
pub fn energy_to_entry(
    comm: &dyn Communicator,
    set: &EntrySet,
    n_e: usize,
    local: &[&[Vec<C64>]],
    packings: &[Packing],
    stats: &mut TransposeStats,
) -> Result<Vec<Spectra>> {
    let (rank, size) = (comm.rank(), comm.size());
    let my_energies = split(n_e, size, rank);
    if local.len() != packings.len() || local.iter().any(|q| q.len() != my_energies.len()) {
        return Err(Error::Shape("energy-major input does not match the energy slice".into()));
    }
    let mut outgoing = Vec::with_capacity(size);
    for r in 0..size {
        let ents = split(set.len(), size, r);
        let mut p = Packet::new(TAG_TO_ENTRY);
        for (q, &packing) in local.iter().zip(packings) {
            for vals in q.iter() {
                for k in ents.clone() {
                    pack(&mut p, vals[k], set.is_diagonal(k), packing);
                }
            }
        }
        account(stats, set, ents, &p, packings, my_energies.len());
        outgoing.push(p);
    }
    stats.calls += 1;
    let incoming = comm.all_to_all(TAG_TO_ENTRY, outgoing)?;
    let my_entries = split(set.len(), size, rank);
    let mut out: Vec<Spectra> = packings.iter().map(|_| Spectra::zeros(my_entries.len(), n_e)).collect();
    for (src, p) in incoming.iter().enumerate() {
        let energies = split(n_e, size, src);
        let mut rd = Reader { p, d: 0, r: 0 };
        for (q, &packing) in packings.iter().enumerate() {
            for e in energies.clone() {
                for (kl, k) in my_entries.clone().enumerate() {
                    out[q].entry_mut(kl)[e] = rd.next(set.is_diagonal(k), packing)?;
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`energy_to_entry`]: `local[q]` are the spectra of this
/// worker's entry slice; returns `out[q][e]` on the whole entry set for this
/// worker's energies.
pub fn entry_to_energy(
    comm: &dyn Communicator,
    set: &EntrySet,
    n_e: usize,
    local: &[&Spectra],
    packings: &[Packing],
    stats: &mut TransposeStats,
) -> Result<Vec<Vec<Vec<C64>>>> {
    let (rank, size) = (comm.rank(), comm.size());
    let my_entries = split(set.len(), size, rank);
    if local.len() != packings.len() || local.iter().any(|s| s.n_entries() != my_entries.len() || s.n_e != n_e) {
        return Err(Error::Shape("entry-major input does not match the entry slice".into()));
    }
    let mut outgoing = Vec::with_capacity(size);
    for r in 0..size {
        let energies = split(n_e, size, r);
        let mut p = Packet::new(TAG_TO_ENERGY);
        for (s, &packing) in local.iter().zip(packings) {
            for e in energies.clone() {
                for (kl, k) in my_entries.clone().enumerate() {
                    pack(&mut p, s.entry(kl)[e], set.is_diagonal(k), packing);
                }
            }
        }
        account(stats, set, my_entries.clone(), &p, packings, energies.len());
        outgoing.push(p);
    }
    stats.calls += 1;
    let incoming = comm.all_to_all(TAG_TO_ENERGY, outgoing)?;
    let my_energies = split(n_e, size, rank);
    let mut out: Vec<Vec<Vec<C64>>> = packings
        .iter()
        .map(|_| vec![vec![C64::new(0.0, 0.0); set.len()]; my_energies.len()])
        .collect();
    for (src, p) in incoming.iter().enumerate() {
        let ents = split(set.len(), size, src);
        let mut rd = Reader { p, d: 0, r: 0 };
        for (q, &packing) in packings.iter().enumerate() {
            for el in 0..my_energies.len() {
                for k in ents.clone() {
                    out[q][el][k] = rd.next(set.is_diagonal(k), packing)?;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt::symmetrize_lg;
    use crate::dist::comm::{InProcessComm, SelfComm};
    use crate::linalg::{c64, random_cmat};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::thread;

    #[test]
    fn split_covers() {
        let parts: Vec<_> = (0..4).map(|r| split(10, 4, r)).collect();
        assert_eq!(parts, vec![0..3, 3..6, 6..8, 8..10]);
    }

    #[test]
    fn entry_set_counts() {
        let s = EntrySet::block_tridiagonal(3, 2);
        // diagonal blocks: 3 upper entries each, upper blocks: 4 each
        assert_eq!(s.len(), 3 * 3 + 2 * 4);
        assert_eq!(s.full_len(), 3 * 4 + 4 * 4);
    }

    #[test]
    fn lg_matrix_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (nb, bs) = (4, 3);
        let mut m = BlockMatrix::zeros(nb, bs, 3, Storage::Full).unwrap();
        for (i, j) in m.stored_pattern() {
            m.set(i, j, random_cmat(&mut rng, bs, bs)).unwrap();
        }
        let m = symmetrize_lg(&m);
        let set = EntrySet::block_tridiagonal(nb, bs);
        let vals = matrix_values(&m, &set, false);
        assert_eq!(lg_matrix(&set, &vals, nb, bs).unwrap(), m);
        let lower = matrix_values(&m, &set, true);
        assert_eq!(full_matrix(&set, &vals, &lower, nb, bs).unwrap(), m);
    }

    fn random_lg_values(rng: &mut ChaCha8Rng, set: &EntrySet) -> Vec<C64> {
        set.entries
            .iter()
            .map(|&(r, c)| {
                if r == c {
                    c64(0.0, rng.gen_range(-1.0..1.0))
                } else {
                    c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                }
            })
            .collect()
    }

    fn round_trip(size: usize, n_e: usize) -> Vec<TransposeStats> {
        let set = EntrySet::block_tridiagonal(5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let lesser: Vec<Vec<C64>> = (0..n_e).map(|_| random_lg_values(&mut rng, &set)).collect();
        let retarded: Vec<Vec<C64>> = (0..n_e)
            .map(|_| (0..set.len()).map(|_| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
            .collect();
        let comms = InProcessComm::group(size);
        let handles: Vec<_> = comms
            .into_iter()
            .map(|c| {
                let set = set.clone();
                let e = split(n_e, size, c.rank());
                let l = lesser[e.clone()].to_vec();
                let r = retarded[e].to_vec();
                thread::spawn(move || {
                    let mut st = TransposeStats::default();
                    let pk = [Packing::Lg, Packing::Full];
                    let em = energy_to_entry(&c, &set, n_e, &[&l, &r], &pk, &mut st).unwrap();
                    let back = entry_to_energy(&c, &set, n_e, &[&em[0], &em[1]], &pk, &mut st).unwrap();
                    assert_eq!(back[0], l);
                    assert_eq!(back[1], r);
                    st
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    }

    #[test]
    fn four_workers_round_trip_and_halve_lg_volume() {
        let stats = round_trip(4, 10);
        let mut total = TransposeStats::default();
        for s in &stats {
            total.merge(s);
        }
        assert_eq!(total.lg_bytes * 2, total.lg_full_bytes);
    }

    #[test]
    fn single_worker_is_a_relabel() {
        let set = EntrySet::block_tridiagonal(2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let vals: Vec<Vec<C64>> = (0..3).map(|_| random_lg_values(&mut rng, &set)).collect();
        let mut st = TransposeStats::default();
        let em = energy_to_entry(&SelfComm, &set, 3, &[&vals], &[Packing::Lg], &mut st).unwrap();
        for k in 0..set.len() {
            for e in 0..3 {
                assert_eq!(em[0].entry(k)[e], vals[e][k]);
            }
        }
    }
}
