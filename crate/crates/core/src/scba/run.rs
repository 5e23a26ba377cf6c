//! The SCBA loop as run by one energy worker.
//!
//! Workers own contiguous slices of the energy grid while solving the
//! electron and screened-interaction systems, and contiguous slices of the
//! matrix entries while convolving. All workers must call [`scba_run`]
//! together with communicators of the same group.

use std::collections::BTreeMap;
use std::ops::Range;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::assemble::{apply_boundary, assemble_g_system, assemble_w_lhs, assemble_w_rhs, Boundary, BoundaryPair, System, Triple};
use super::convolve::Spectra;
use super::layout::{energy_to_entry, entry_to_energy, full_matrix, lg_matrix, lg_values, split, EntrySet, Packing, TransposeStats};
use super::selfenergy::{compute_polarization, compute_sigma, Backend, LgSpectra};
use crate::bt::device::Subsystem;
use crate::bt::{BlockMatrix, EnergyGrid};
use crate::dist::comm::{Communicator, Packet};
use crate::error::{Error, Result};
use crate::flops;
use crate::linalg::{adj, c64, eye, frob, C64};
use crate::obc::fdt::DEFAULT_KT;
use crate::obc::{
    fermi, sigma_lg_obc, BeynParams, CacheKey, ContactBlocks, Kind, LeadLesserTerms, LyapunovMethod, MemoStats,
    RetardedMethod, RetardedSurface, Side, SteinSurface, SurfaceCache,
};
use crate::rgf::{rgf_solve, SelectedSolution};

pub const CAT_G_OBC: &str = "G: OBC";
pub const CAT_G_RGF: &str = "G: RGF";
pub const CAT_W_BEYN: &str = "W: Assembly: Beyn";
pub const CAT_W_LYAPUNOV: &str = "W: Assembly: Lyapunov";
pub const CAT_W_LHS: &str = "W: Assembly: LHS";
pub const CAT_W_RHS: &str = "W: Assembly: RHS";
pub const CAT_W_RGF: &str = "W: RGF";
pub const CAT_OTHER: &str = "Other";

/// Report categories in display order.
pub const CATEGORIES: [&str; 8] = [CAT_G_OBC, CAT_G_RGF, CAT_W_BEYN, CAT_W_LYAPUNOV, CAT_W_LHS, CAT_W_RHS, CAT_W_RGF, CAT_OTHER];

const TAG_GATHER: u64 = 0x7501;
const TAG_BCAST: u64 = 0x7502;

/// Equilibrium contacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    pub mu_left: f64,
    pub mu_right: f64,
    #[serde(rename = "kT")]
    pub kt: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig { mu_left: 0.0, mu_right: 0.0, kt: DEFAULT_KT }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScbaOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// `Σ <- a Σ_computed + (1 - a) Σ_old`
    pub mixing: f64,
    /// Solve every electron system without the scattering self-energy.
    pub reset_sigma: bool,
    /// `false` solves the ballistic device once.
    pub interacting: bool,
    pub retarded_method: RetardedMethod,
    pub beyn: BeynParams,
    pub lyapunov: LyapunovMethod,
    pub memoizer: bool,
    pub n_fpi_retarded: usize,
    pub n_fpi_lg: usize,
    pub backend: Backend,
    /// Repeat every convolution with the direct sum and record the deviation.
    pub oracle: bool,
}

impl Default for ScbaOptions {
    fn default() -> Self {
        ScbaOptions {
            max_iter: 50,
            tol: 1e-6,
            mixing: 0.3,
            reset_sigma: false,
            interacting: true,
            retarded_method: RetardedMethod::Beyn,
            beyn: BeynParams::default(),
            lyapunov: LyapunovMethod::Doubling,
            memoizer: true,
            n_fpi_retarded: 20,
            n_fpi_lg: 10,
            backend: Backend::Fft,
            oracle: false,
        }
    }
}

impl ScbaOptions {
    pub fn validate(&self) -> Result<()> {
        // zero runs to max_iter
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must not be negative, got {}", self.tol)));
        }
        if !(self.mixing > 0.0 && self.mixing <= 1.0) {
            return Err(Error::InvalidInput(format!("mixing must lie in (0, 1], got {}", self.mixing)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be positive".into()));
        }
        Ok(())
    }

    /// Switching tolerance of the memoizer, a tenth of the SCBA tolerance
    /// kept within `[1e-12, 1e-6]`.
    fn memo_tol(&self) -> f64 {
        (self.tol / 10.0).clamp(1e-12, 1e-6)
    }
}

/// Solver for the selected blocks of one system.
pub trait SelectedSolver: Sync {
    fn solve(&self, m: &BlockMatrix, b_lesser: Option<&BlockMatrix>, b_greater: Option<&BlockMatrix>) -> Result<SelectedSolution>;
}

/// Recursive Green's function solve on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl SelectedSolver for Sequential {
    fn solve(&self, m: &BlockMatrix, b_lesser: Option<&BlockMatrix>, b_greater: Option<&BlockMatrix>) -> Result<SelectedSolution> {
        rgf_solve(m, b_lesser, b_greater)
    }
}

/// Wall time and flops per report category.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub seconds: BTreeMap<String, f64>,
    pub flops: BTreeMap<String, u64>,
}

impl Timings {
    fn time<T>(&mut self, cat: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let (out, n) = flops::measure(f);
        *self.seconds.entry(cat.to_string()).or_default() += t.elapsed().as_secs_f64();
        *self.flops.entry(cat.to_string()).or_default() += n;
        out
    }

    pub fn get(&self, cat: &str) -> f64 {
        self.seconds.get(cat).copied().unwrap_or(0.0)
    }

    pub fn total_flops(&self) -> u64 {
        self.flops.values().sum()
    }

    /// Combines workers running side by side: wall times take the maximum,
    /// flops add up.
    pub fn merge(&mut self, o: &Timings) {
        for (k, v) in &o.seconds {
            let e = self.seconds.entry(k.clone()).or_default();
            *e = e.max(*v);
        }
        for (k, v) in &o.flops {
            *self.flops.entry(k.clone()).or_default() += v;
        }
    }
}

/// Diagnostics of one iteration, reduced over all workers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub residual: f64,
    /// Relative defect of `X^> - X^< = X^R - X^R^H`.
    pub g_identity: f64,
    pub p_identity: f64,
    pub sigma_identity: f64,
    /// Largest relative deviation between the FFT and direct-sum convolutions.
    pub fft_direct: Option<f64>,
    /// Surface-function calls of this iteration, summed over workers.
    pub memo: MemoStats,
    pub seconds: f64,
}

/// What one worker returns.
#[derive(Clone, Debug)]
pub struct RankOutput {
    pub rank: usize,
    pub energies: Range<usize>,
    /// Final electron solutions on this worker's energies.
    pub g: Vec<SelectedSolution>,
    /// Final (mixed) scattering self-energy on this worker's energies.
    pub sigma: Vec<Triple>,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub timings: Timings,
    pub memo: MemoStats,
    pub transpose: TransposeStats,
}

/// Inputs shared by all workers.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    /// Hamiltonian in the electron blocking.
    pub h: &'a BlockMatrix,
    /// Bare interaction in the screened-interaction blocking.
    pub v: &'a BlockMatrix,
    pub grid: &'a EnergyGrid,
    pub contacts: &'a ContactConfig,
}

impl Problem<'_> {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if !(self.contacts.kt > 0.0) {
            return Err(Error::InvalidInput(format!("kT must be positive, got {}", self.contacts.kt)));
        }
        let (h, v) = (self.h, self.v);
        if h.n_blocks() < 2 || v.n_blocks() < 2 {
            return Err(Error::InvalidInput("open boundaries need at least two cells per subsystem".into()));
        }
        if h.dim() != v.dim() || v.block_size() % h.block_size() != 0 {
            return Err(Error::Grouping(format!(
                "interaction blocks of {} do not group the electron blocks of {} over {} orbitals",
                v.block_size(),
                h.block_size(),
                h.dim()
            )));
        }
        Ok(())
    }
}

/// Retarded blocks of a ballistic lead continuing the boundary cell of `h`,
/// with the broadening `eta`.
pub fn electron_lead(h: &BlockMatrix, side: Side, e: f64, eta: f64) -> Result<ContactBlocks> {
    let nb = h.n_blocks();
    let bs = h.block_size();
    let z = eye(bs) * c64(e, eta);
    let (b, n, np) = match side {
        Side::Left => (0, h.block(1, 0), h.block(0, 1)),
        Side::Right => (nb - 1, h.block(nb - 2, nb - 1), h.block(nb - 1, nb - 2)),
    };
    ContactBlocks::new(z - h.block(b, b), -n, -np, side, Subsystem::G)
}

struct Worker<'a> {
    p: Problem<'a>,
    opts: &'a ScbaOptions,
    comm: &'a dyn Communicator,
    solver: &'a dyn SelectedSolver,
    set: EntrySet,
    energies: Range<usize>,
    diag: Vec<bool>,
    cache: SurfaceCache,
    timings: Timings,
    transpose: TransposeStats,
}

fn key(subsystem: Subsystem, side: Side, energy_index: usize, kind: Kind) -> CacheKey {
    CacheKey { subsystem, side, energy_index, kind }
}

fn allreduce(comm: &dyn Communicator, vals: &[f64], init: f64, op: fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    let mut p = Packet::new(TAG_GATHER);
    p.reals = vals.to_vec();
    let root = comm.gather(0, TAG_GATHER, p)?.map(|all| {
        let mut out = Packet::new(TAG_BCAST);
        out.reals = (0..vals.len()).map(|i| all.iter().map(|q| q.reals[i]).fold(init, op)).collect();
        out
    });
    Ok(comm.broadcast(0, TAG_BCAST, root)?.reals)
}

fn allreduce_max(comm: &dyn Communicator, vals: &[f64]) -> Result<Vec<f64>> {
    allreduce(comm, vals, f64::NEG_INFINITY, f64::max)
}

fn allreduce_memo(comm: &dyn Communicator, m: &MemoStats) -> Result<MemoStats> {
    let v = allreduce(comm, &[m.direct_calls as f64, m.memoized_calls as f64, m.fallbacks as f64], 0.0, |a, b| a + b)?;
    Ok(MemoStats { direct_calls: v[0] as u64, memoized_calls: v[1] as u64, fallbacks: v[2] as u64 })
}

fn memo_delta(now: &MemoStats, before: &MemoStats) -> MemoStats {
    MemoStats {
        direct_calls: now.direct_calls - before.direct_calls,
        memoized_calls: now.memoized_calls - before.memoized_calls,
        fallbacks: now.fallbacks - before.fallbacks,
    }
}

/// Divergence test on the residual history: the last residual exceeds five
/// times the one ten iterations earlier.
pub fn check_divergence(history: &[IterationRecord]) -> Result<()> {
    let n = history.len();
    if n > 10 {
        let (last, earlier) = (&history[n - 1], &history[n - 11]);
        if last.residual > 5.0 * earlier.residual {
            return Err(Error::Diverged { iteration: last.iteration, residual: last.residual, earlier: earlier.residual });
        }
    }
    Ok(())
}

/// Spectral identity defect of one electron solution: `(max defect, max |G^> - G^<|)`.
fn g_identity(g: &SelectedSolution) -> (f64, f64) {
    let (Some(l), Some(gr)) = (&g.lesser, &g.greater) else {
        return (0.0, 0.0);
    };
    let r = &g.retarded;
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for i in 0..r.diag.len() {
        let d = &gr.diag[i] - &l.diag[i];
        num = num.max(frob(&(&d - (&r.diag[i] - adj(&r.diag[i])))));
        den = den.max(frob(&d));
    }
    for i in 0..r.upper.len() {
        let d = &gr.upper[i] - &l.upper[i];
        num = num.max(frob(&(&d - (&r.upper[i] - adj(&r.lower[i])))));
        den = den.max(frob(&d));
    }
    (num, den)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

impl Worker<'_> {
    fn electron_boundary(&mut self, k: usize) -> Result<BoundaryPair> {
        let e = self.p.grid.energy(k);
        let tol = self.opts.memo_tol();
        let mut sides = Vec::with_capacity(2);
        for (side, mu) in [(Side::Left, self.p.contacts.mu_left), (Side::Right, self.p.contacts.mu_right)] {
            let c = electron_lead(self.p.h, side, e, self.p.grid.eta)?;
            let problem = RetardedSurface { contact: &c, method: self.opts.retarded_method, beyn: &self.opts.beyn };
            let x = self.cache.memoized(key(Subsystem::G, side, k, Kind::Retarded), tol, &problem)?;
            let retarded = c.self_energy(&x);
            let (lesser, greater) = sigma_lg_obc(&retarded, fermi(e, mu, self.p.contacts.kt));
            sides.push(Boundary { retarded, lesser, greater });
        }
        let right = sides.pop().expect("two sides");
        let left = sides.pop().expect("two sides");
        Ok(BoundaryPair { left, right })
    }

    /// Solves the electron systems of this worker's energies.
    fn solve_electrons(&mut self, sigma: Option<&[Triple]>) -> Result<(Vec<SelectedSolution>, f64, f64)> {
        let mut out = Vec::with_capacity(self.energies.len());
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for (kl, k) in self.energies.clone().enumerate() {
            let obc = {
                let t = Instant::now();
                let (r, n) = flops::measure(|| self.electron_boundary(k));
                *self.timings.seconds.entry(CAT_G_OBC.into()).or_default() += t.elapsed().as_secs_f64();
                *self.timings.flops.entry(CAT_G_OBC.into()).or_default() += n;
                r?
            };
            let e = self.p.grid.energy(k);
            let sys = assemble_g_system(e, self.p.h, sigma.map(|s| &s[kl]), Some(&obc))?;
            let solver = self.solver;
            let g = self.timings.time(CAT_G_RGF, || solver.solve(&sys.m, Some(&sys.b_lesser), Some(&sys.b_greater)))?;
            let (a, b) = g_identity(&g);
            num = num.max(a);
            den = den.max(b);
            out.push(g);
        }
        Ok((out, num, den))
    }

    fn to_entries(&mut self, local: &[&[Vec<C64>]], packings: &[Packing]) -> Result<Vec<Spectra>> {
        energy_to_entry(self.comm, &self.set, self.p.grid.n_e, local, packings, &mut self.transpose)
    }

    fn to_energies(&mut self, local: &[&Spectra], packings: &[Packing]) -> Result<Vec<Vec<Vec<C64>>>> {
        entry_to_energy(self.comm, &self.set, self.p.grid.n_e, local, packings, &mut self.transpose)
    }

    /// Convolution with the configured backend, optionally cross-checked.
    fn convolve(&self, f: impl Fn(Backend) -> Result<LgSpectra>, dev: &mut f64) -> Result<LgSpectra> {
        let out = f(self.opts.backend)?;
        if self.opts.oracle {
            let other = f(if self.opts.backend == Backend::Fft { Backend::Direct } else { Backend::Fft })?;
            *dev = dev.max(out.lesser.rel_diff(&other.lesser)).max(out.greater.rel_diff(&other.greater));
        }
        Ok(out)
    }

    /// Screened-interaction boundary terms at bosonic index `k`.
    fn interaction_boundary(&mut self, k: usize, m: &BlockMatrix, bl: &BlockMatrix, bg: &BlockMatrix) -> Result<BoundaryPair> {
        let tol = self.opts.memo_tol();
        let nb = m.n_blocks();
        let mut sides = Vec::with_capacity(2);
        for side in [Side::Left, Side::Right] {
            let c = ContactBlocks::from_system(m, side, Subsystem::W)?;
            let problem = RetardedSurface { contact: &c, method: self.opts.retarded_method, beyn: &self.opts.beyn };
            let cache = &mut self.cache;
            let (x, retarded) = self.timings.time(CAT_W_BEYN, || -> Result<_> {
                let x = cache.memoized(key(Subsystem::W, side, k, Kind::Retarded), tol, &problem)?;
                let r = c.self_energy(&x);
                Ok((x, r))
            })?;
            let (b0, bc) = match side {
                Side::Left => (0, (0, 1)),
                Side::Right => (nb - 1, (nb - 1, nb - 2)),
            };
            let mut lg = Vec::with_capacity(2);
            for (kind, b) in [(Kind::Lesser, bl), (Kind::Greater, bg)] {
                let cache = &mut self.cache;
                let method = self.opts.lyapunov;
                let boundary = self.timings.time(CAT_W_LYAPUNOV, || -> Result<_> {
                    let terms = LeadLesserTerms::new(&c, &x, &b.block(b0, b0), &b.block(bc.0, bc.1));
                    let problem = SteinSurface { a: &terms.a, q: &terms.q, method, tol: 1e-13 };
                    let w = cache.memoized(key(Subsystem::W, side, k, kind), tol, &problem)?;
                    Ok(terms.boundary(&c, &w))
                })?;
                lg.push(boundary);
            }
            let greater = lg.pop().expect("two kinds");
            let lesser = lg.pop().expect("two kinds");
            sides.push(Boundary { retarded, lesser, greater });
        }
        let right = sides.pop().expect("two sides");
        let left = sides.pop().expect("two sides");
        Ok(BoundaryPair { left, right })
    }

    /// Screened interaction on this worker's bosonic indices, from the
    /// polarization values in energy-major layout.
    fn solve_interaction(&mut self, pl: &[Vec<C64>], pg: &[Vec<C64>], pru: &[Vec<C64>], prl: &[Vec<C64>]) -> Result<(Vec<Vec<C64>>, Vec<Vec<C64>>)> {
        let v = self.p.v;
        let (nb, bs) = (v.n_blocks(), v.block_size());
        let mut wl = Vec::with_capacity(pl.len());
        let mut wg = Vec::with_capacity(pl.len());
        for (kl, k) in self.energies.clone().enumerate() {
            let set = &self.set;
            let p_r = full_matrix(set, &pru[kl], &prl[kl], nb, bs)?;
            let m = self.timings.time(CAT_W_LHS, || assemble_w_lhs(v, &p_r))?;
            let (bl, bg) = self.timings.time(CAT_W_RHS, || -> Result<_> {
                let p_l = lg_matrix(set, &pl[kl], nb, bs)?;
                let p_g = lg_matrix(set, &pg[kl], nb, bs)?;
                Ok((assemble_w_rhs(v, &p_l)?, assemble_w_rhs(v, &p_g)?))
            })?;
            let obc = self.interaction_boundary(k, &m, &bl, &bg)?;
            let mut sys = System { m, b_lesser: bl, b_greater: bg };
            apply_boundary(&mut sys, &obc)?;
            let solver = self.solver;
            let w = self.timings.time(CAT_W_RGF, || solver.solve(&sys.m, Some(&sys.b_lesser), Some(&sys.b_greater)))?;
            wl.push(lg_values(w.lesser.as_ref().expect("lesser requested"), bs, &self.set));
            wg.push(lg_values(w.greater.as_ref().expect("greater requested"), bs, &self.set));
        }
        Ok((wl, wg))
    }

    /// One G -> P -> W -> Σ pass; returns the new self-energy in
    /// energy-major layout and the record without the residual.
    fn iterate(&mut self, sigma: Option<&[Triple]>) -> Result<(Vec<Triple>, IterationRecord)> {
        let (nb, bs) = (self.p.h.n_blocks(), self.p.h.block_size());
        let de = self.p.grid.de();
        let (g, gnum, gden) = self.solve_electrons(sigma)?;
        let gl: Vec<Vec<C64>> = g.iter().map(|s| lg_values(s.lesser.as_ref().expect("lesser"), bs, &self.set)).collect();
        let gg: Vec<Vec<C64>> = g.iter().map(|s| lg_values(s.greater.as_ref().expect("greater"), bs, &self.set)).collect();
        drop(g);
        let mut dev = 0.0f64;

        let t = Instant::now();
        let f0 = flops::read();
        let gs = self.to_entries(&[&gl, &gg], &[Packing::Lg, Packing::Lg])?;
        let diag = self.diag.clone();
        let p = self.convolve(|b| compute_polarization(&gs[0], &gs[1], &diag, de, b), &mut dev)?;
        let p_identity = p.identity_defect();
        let pe = self.to_energies(
            &[&p.lesser, &p.greater, &p.retarded, &p.retarded_lower],
            &[Packing::Lg, Packing::Lg, Packing::Full, Packing::Full],
        )?;
        drop(p);
        let other = t.elapsed().as_secs_f64();
        let mut other_flops = flops::read().wrapping_sub(f0);

        let (wl, wg) = self.solve_interaction(&pe[0], &pe[1], &pe[2], &pe[3])?;

        let t = Instant::now();
        let f0 = flops::read();
        let ws = self.to_entries(&[&wl, &wg], &[Packing::Lg, Packing::Lg])?;
        let s = self.convolve(|b| compute_sigma(&gs[0], &gs[1], &ws[0], &ws[1], &diag, de, b), &mut dev)?;
        let sigma_identity = s.identity_defect();
        let se = self.to_energies(
            &[&s.lesser, &s.greater, &s.retarded, &s.retarded_lower],
            &[Packing::Lg, Packing::Lg, Packing::Full, Packing::Full],
        )?;
        let mut out = Vec::with_capacity(self.energies.len());
        for kl in 0..self.energies.len() {
            out.push(Triple {
                retarded: full_matrix(&self.set, &se[2][kl], &se[3][kl], nb, bs)?,
                lesser: lg_matrix(&self.set, &se[0][kl], nb, bs)?,
                greater: lg_matrix(&self.set, &se[1][kl], nb, bs)?,
            });
        }
        let other = other + t.elapsed().as_secs_f64();
        other_flops += flops::read().wrapping_sub(f0);
        *self.timings.seconds.entry("_convolution".into()).or_default() += other;
        *self.timings.flops.entry(CAT_OTHER.into()).or_default() += other_flops;

        let red = allreduce_max(self.comm, &[gnum, gden, p_identity, sigma_identity, dev])?;
        let rec = IterationRecord {
            g_identity: ratio(red[0], red[1]),
            p_identity: red[2],
            sigma_identity: red[3],
            fft_direct: self.opts.oracle.then_some(red[4]),
            ..Default::default()
        };
        Ok((out, rec))
    }
}

/// Largest change of the diagonal-block traces of `Σ^≶` and the largest trace.
fn trace_change(old: &[Triple], new: &[Triple]) -> (f64, f64) {
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for (a, b) in old.iter().zip(new) {
        for (x, y) in [(&a.lesser, &b.lesser), (&a.greater, &b.greater)] {
            for i in 0..x.n_blocks() {
                let (tx, ty) = (x.block(i, i).trace(), y.block(i, i).trace());
                num = num.max((ty - tx).norm());
                den = den.max(tx.norm()).max(ty.norm());
            }
        }
    }
    (num, den)
}

/// Runs the self-consistent cycle on this worker's share of the grid.
pub fn scba_run(p: Problem<'_>, opts: &ScbaOptions, comm: &dyn Communicator, solver: &dyn SelectedSolver) -> Result<RankOutput> {
    p.validate()?;
    opts.validate()?;
    let start = Instant::now();
    let (nb, bs) = (p.h.n_blocks(), p.h.block_size());
    let set = EntrySet::block_tridiagonal(nb, bs);
    let (rank, size) = (comm.rank(), comm.size());
    let energies = split(p.grid.n_e, size, rank);
    let entries = split(set.len(), size, rank);
    let diag = entries.clone().map(|k| set.is_diagonal(k)).collect();
    let mut w = Worker {
        p,
        opts,
        comm,
        solver,
        set,
        energies: energies.clone(),
        diag,
        cache: SurfaceCache::new(opts.n_fpi_retarded, opts.n_fpi_lg, opts.memoizer),
        timings: Timings::default(),
        transpose: TransposeStats::default(),
    };

    let mut sigma: Vec<Triple> = energies.clone().map(|_| Triple::zeros(nb, bs)).collect::<Result<_>>()?;
    let mut history: Vec<IterationRecord> = Vec::new();
    let mut converged = !opts.interacting;
    if opts.interacting {
        for it in 1..=opts.max_iter {
            let t = Instant::now();
            let memo_before = w.cache.stats;
            let current = if opts.reset_sigma || it == 1 { None } else { Some(sigma.as_slice()) };
            let (computed, mut rec) = w.iterate(current)?;
            let mut mixed = Vec::with_capacity(computed.len());
            for (c, o) in computed.iter().zip(&sigma) {
                mixed.push(c.mix(o, opts.mixing)?);
            }
            let (num, den) = trace_change(&sigma, &mixed);
            let red = allreduce_max(comm, &[num, den])?;
            rec.iteration = it;
            rec.residual = ratio(red[0], red[1]);
            rec.memo = allreduce_memo(comm, &memo_delta(&w.cache.stats, &memo_before))?;
            rec.seconds = t.elapsed().as_secs_f64();
            sigma = mixed;
            log::info!(
                "iteration {it}: residual {:.3e}, identities G {:.1e} P {:.1e} Σ {:.1e}",
                rec.residual,
                rec.g_identity,
                rec.p_identity,
                rec.sigma_identity
            );
            let residual = rec.residual;
            history.push(rec);
            if residual < opts.tol {
                converged = true;
                break;
            }
            check_divergence(&history)?;
        }
    }
    let current = if opts.interacting && !opts.reset_sigma { Some(sigma.as_slice()) } else { None };
    let (g, _, _) = w.solve_electrons(current)?;

    let mut timings = w.timings;
    let conv = timings.seconds.remove("_convolution").unwrap_or(0.0);
    let named: f64 = timings.seconds.values().sum();
    let total = start.elapsed().as_secs_f64();
    timings.seconds.insert(CAT_OTHER.into(), (total - named).max(conv));
    for c in CATEGORIES {
        timings.seconds.entry(c.into()).or_default();
        timings.flops.entry(c.into()).or_default();
    }
    Ok(RankOutput {
        rank,
        energies,
        g,
        sigma,
        history,
        converged,
        timings,
        memo: w.cache.stats,
        transpose: w.transpose,
    })
}

/// Merged statistics of all workers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub converged: bool,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub timings: Timings,
    pub memo: MemoStats,
    pub transpose: TransposeStats,
}

/// Combines the outputs of all workers (in any order) into per-energy
/// solutions in grid order and a summary.
pub fn merge_outputs(mut outs: Vec<RankOutput>) -> (Vec<SelectedSolution>, Vec<Triple>, RunSummary) {
    outs.sort_by_key(|o| o.rank);
    let mut summary = RunSummary {
        converged: outs.iter().all(|o| o.converged),
        iterations: outs.first().map_or(0, |o| o.history.len()),
        history: outs.first().map(|o| o.history.clone()).unwrap_or_default(),
        ..Default::default()
    };
    let mut g = Vec::new();
    let mut sigma = Vec::new();
    for o in outs {
        summary.timings.merge(&o.timings);
        summary.memo.merge(&o.memo);
        summary.transpose.merge(&o.transpose);
        g.extend(o.g);
        sigma.extend(o.sigma);
    }
    (g, sigma, summary)
}
