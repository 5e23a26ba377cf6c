//! Kernel benchmarks, log-log slope fits and the symbolic flop model.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::run::{run_threads, Operators};
use super::solver::PartitionedSolver;
use super::toy::{toy_device, ToyParams};
use crate::bt::{symmetrize_lg, BlockMatrix, EnergyGrid, Storage};
use crate::error::{Error, Result};
use crate::flops;
use crate::linalg::{c64, eye, random_cmat, C64};
use crate::rgf::rgf_solve;
use crate::scba::convolve::{convolve_energy, Mode, Spectra};
use crate::scba::layout::EntrySet;
use crate::scba::run::{ContactConfig, ScbaOptions, SelectedSolver, CATEGORIES};

/// Random diagonally dominant block-tridiagonal `M` with anti-Hermitian
/// right-hand sides `B^<`, `B^>`.
pub fn random_bt_system(seed: u64, n_b: usize, bs: usize) -> Result<(BlockMatrix, BlockMatrix, BlockMatrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bw = if n_b == 1 { 1 } else { 3 };
    let mut m = BlockMatrix::zeros(n_b, bs, bw, Storage::Full)?;
    let mut bl = m.clone();
    let mut bg = m.clone();
    for (i, j) in m.stored_pattern() {
        let mut blk = random_cmat(&mut rng, bs, bs);
        if i == j {
            blk += eye(bs) * c64(2.0 * bs as f64 + 2.0, 0.5);
        }
        m.set(i, j, blk)?;
        bl.set(i, j, random_cmat(&mut rng, bs, bs))?;
        bg.set(i, j, random_cmat(&mut rng, bs, bs))?;
    }
    Ok((m, symmetrize_lg(&bl), symmetrize_lg(&bg)))
}

/// One benchmark point: its flop count and a closure running it once.
pub struct Case<'a> {
    pub x: usize,
    pub flops: u64,
    pub run: Box<dyn FnMut() + 'a>,
}

impl<'a> Case<'a> {
    /// Runs `f` once to count its flops.
    pub fn new<T>(x: usize, mut f: impl FnMut() -> Result<T> + 'a) -> Result<Self> {
        let (r, flops) = flops::measure(&mut f);
        r?;
        Ok(Case { x, flops, run: Box::new(move || drop(f())) })
    }
}

/// Seconds per call of each case in each of `rounds` rounds, as
/// `times[round][case]`. A round times all cases in turn with batches of at
/// least `min_batch` seconds, so a slow phase of the machine hits them alike.
pub fn time_interleaved(cases: &mut [Case<'_>], min_batch: f64, rounds: usize) -> Vec<Vec<f64>> {
    (0..rounds)
        .map(|_| {
            cases
                .iter_mut()
                .map(|c| {
                    let t = Instant::now();
                    let mut n = 0u32;
                    while n == 0 || t.elapsed().as_secs_f64() < min_batch {
                        (c.run)();
                        n += 1;
                    }
                    t.elapsed().as_secs_f64() / n as f64
                })
                .collect()
        })
        .collect()
}

const ROUNDS: usize = 15;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchPoint {
    pub x: usize,
    pub seconds: f64,
    pub flops: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub name: String,
    pub points: Vec<BenchPoint>,
    /// Log-log slope of time against the swept parameter.
    pub slope: f64,
    pub expected: String,
}

impl std::fmt::Display for SweepReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{}: slope {:.3} (expected {})", self.name, self.slope, self.expected)?;
        for p in &self.points {
            writeln!(f, "  {:>6} {:>12.6} s {:>14} flop", p.x, p.seconds, p.flops)?;
        }
        Ok(())
    }
}

fn sweep(name: String, expected: &str, mut cases: Vec<Case<'_>>, min_batch: f64) -> Result<SweepReport> {
    if cases.len() < 2 {
        return Err(Error::InvalidInput(format!("{name}: a sweep needs at least two points")));
    }
    let times = time_interleaved(&mut cases, min_batch, ROUNDS);
    let x: Vec<f64> = cases.iter().map(|c| c.x as f64).collect();
    // slope within each round, then the median over rounds
    let slope = median(times.iter().map(|t| loglog_slope(&x, t)).collect());
    let points: Vec<BenchPoint> = cases
        .iter()
        .enumerate()
        .map(|(k, c)| BenchPoint { x: c.x, seconds: times.iter().map(|t| t[k]).fold(f64::INFINITY, f64::min), flops: c.flops })
        .collect();
    Ok(SweepReport { name, points, slope, expected: expected.into() })
}

/// One selected solve with both right-hand sides.
pub fn rgf_case(x: usize, n_b: usize, bs: usize) -> Result<Case<'static>> {
    let (m, bl, bg) = random_bt_system(n_b as u64 * 1000 + bs as u64, n_b, bs)?;
    Case::new(x, move || rgf_solve(&m, Some(&bl), Some(&bg)))
}

pub fn rgf_vs_nb(n_bs: &[usize], bs: usize, min_batch: f64) -> Result<SweepReport> {
    let cases = n_bs.iter().map(|&nb| rgf_case(nb, nb, bs)).collect::<Result<_>>()?;
    sweep(format!("RGF time vs N_B (N_BS = {bs})"), "1.0 ± 0.2", cases, min_batch)
}

pub fn rgf_vs_bs(n_b: usize, sizes: &[usize], min_batch: f64) -> Result<SweepReport> {
    let cases = sizes.iter().map(|&bs| rgf_case(bs, n_b, bs)).collect::<Result<_>>()?;
    sweep(format!("RGF time vs N_BS (N_B = {n_b})"), "3.0 ± 0.3", cases, min_batch)
}

/// Entries of the convolution sweep. Small enough that the spectra stay in
/// cache up to N_E = 1024, so the fit sees the transform cost and not the
/// memory hierarchy.
pub const CONVOLUTION_ENTRIES: usize = 16;

/// One energy correlation over `n_entries` entries.
pub fn convolution_case(n_e: usize, n_entries: usize) -> Result<Case<'static>> {
    let mut rng = ChaCha8Rng::seed_from_u64(n_e as u64);
    let mut a = Spectra::zeros(n_entries, n_e);
    let mut b = Spectra::zeros(n_entries, n_e);
    for k in 0..n_entries {
        a.entry_mut(k).copy_from_slice(random_cmat(&mut rng, n_e, 1).as_slice());
        b.entry_mut(k).copy_from_slice(random_cmat(&mut rng, n_e, 1).as_slice());
    }
    Case::new(n_e, move || convolve_energy(&a, &b, Mode::Correlation, C64::new(0.0, 1.0), 0.1))
}

pub fn convolution_vs_ne(n_es: &[usize], n_entries: usize, min_batch: f64) -> Result<SweepReport> {
    let cases = n_es.iter().map(|&n| convolution_case(n, n_entries)).collect::<Result<_>>()?;
    sweep(format!("convolution time vs N_E ({n_entries} entries)"), "<= 1.2 (N_E log N_E)", cases, min_batch)
}

/// Partitioned solve for each `p_s`: flops include every partition; the
/// time is wall time with one thread per partition.
pub fn partition_sweep(n_b: usize, bs: usize, p_ss: &[usize], min_batch: f64) -> Result<SweepReport> {
    let (m, bl, bg) = random_bt_system(7, n_b, bs)?;
    let cases = p_ss
        .iter()
        .map(|&p_s| {
            let s = PartitionedSolver::new(p_s)?;
            let (m, bl, bg) = (&m, &bl, &bg);
            Case::new(p_s, move || s.solve(m, Some(bl), Some(bg)))
        })
        .collect::<Result<_>>()?;
    sweep(format!("partitioned solve vs p_s (N_B = {n_b}, N_BS = {bs})"), "flop overhead O(p_s N_BS^3)", cases, min_batch)
}

/// Flops of a sequential and a `p_s`-partition selected solve of the same
/// system.
pub fn partition_workload(n_b: usize, bs: usize, p_s: usize) -> Result<(u64, u64)> {
    let (m, bl, bg) = random_bt_system(11, n_b, bs)?;
    let (r, seq) = flops::measure(|| rgf_solve(&m, Some(&bl), Some(&bg)));
    r?;
    let (r, dist) = flops::measure(|| PartitionedSolver::new(p_s)?.solve(&m, Some(&bl), Some(&bg)));
    r?;
    Ok((seq, dist))
}

/// One SCBA iteration on a toy device with `per_worker` energies on each of
/// `workers` threads. Reports `t(1) / t(n)` per worker count.
pub fn weak_scaling(workers: &[usize], per_worker: usize) -> Result<Vec<(usize, f64, f64)>> {
    let ops = Operators::of(&toy_device(&ToyParams::default())?)?;
    let contacts = ContactConfig { mu_left: 0.1, mu_right: -0.1, kt: 0.1 };
    let opts = ScbaOptions { max_iter: 1, tol: f64::INFINITY, ..Default::default() };
    let mut out = Vec::new();
    let mut t1 = None;
    for &w in workers {
        let grid = EnergyGrid::new(-3.0, 3.0, (per_worker * w).max(2), 1e-3)?;
        let t = Instant::now();
        run_threads(ops.problem(&grid, &contacts), &opts, w, 1)?;
        let s = t.elapsed().as_secs_f64();
        let base = *t1.get_or_insert(s);
        out.push((w, s, base / s));
    }
    Ok(out)
}

/// All benchmark sweeps, as run by `gwtransport bench`.
#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub sweeps: Vec<SweepReport>,
    /// `(p_s, sequential flops, partitioned flops)`
    pub workload: Vec<(usize, u64, u64)>,
    /// `(workers, seconds, t(1) / t(n))`
    pub weak_scaling: Vec<(usize, f64, f64)>,
}

/// Sweep values for [`BenchReport::run`]. Empty lists skip a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchPlan {
    pub n_b: Vec<usize>,
    pub n_bs: Vec<usize>,
    pub n_e: Vec<usize>,
    pub p_s: Vec<usize>,
    /// Largest worker count of the weak-scaling sweep (powers of two).
    pub workers: usize,
    /// Minimum length of one timing batch, seconds.
    pub min_batch: f64,
}

impl Default for BenchPlan {
    fn default() -> Self {
        BenchPlan { n_b: vec![4, 8, 16], n_bs: vec![8, 16, 32], n_e: vec![64, 128, 256, 512, 1024], p_s: vec![1, 2, 4], workers: 1, min_batch: 0.03 }
    }
}

impl BenchReport {
    pub fn run(plan: &BenchPlan) -> Result<Self> {
        let mb = plan.min_batch;
        let mut sweeps = Vec::new();
        if !plan.n_b.is_empty() {
            sweeps.push(rgf_vs_nb(&plan.n_b, 16, mb)?);
        }
        if !plan.n_bs.is_empty() {
            sweeps.push(rgf_vs_bs(16, &plan.n_bs, mb)?);
        }
        if !plan.n_e.is_empty() {
            sweeps.push(convolution_vs_ne(&plan.n_e, CONVOLUTION_ENTRIES, mb)?);
        }
        let mut workload = Vec::new();
        if !plan.p_s.is_empty() {
            let nb = 8 * plan.p_s.iter().max().copied().unwrap_or(1);
            sweeps.push(partition_sweep(nb, 16, &plan.p_s, mb)?);
            for &p in &plan.p_s {
                let (s, d) = partition_workload(nb, 16, p)?;
                workload.push((p, s, d));
            }
        }
        let counts: Vec<usize> = std::iter::successors(Some(1), |w| Some(w * 2)).take_while(|&w| w <= plan.workers.max(1)).collect();
        Ok(BenchReport { sweeps, workload, weak_scaling: weak_scaling(&counts, 8)? })
    }
}

impl std::fmt::Display for BenchReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for s in &self.sweeps {
            writeln!(f, "{s}")?;
        }
        writeln!(f, "selected-solve workload (N_BS = 16)")?;
        for (p, s, d) in &self.workload {
            writeln!(f, "  p_s {p}: {d} flop ({:+.1}% vs sequential)", 100.0 * (*d as f64 / *s as f64 - 1.0))?;
        }
        writeln!(f, "weak scaling, one SCBA iteration, 8 energies per worker")?;
        for (w, t, r) in &self.weak_scaling {
            writeln!(f, "  {w:>3} workers {t:>10.4} s  t(1)/t(n) {r:.2}")?;
        }
        Ok(())
    }
}

/// Number of block products `bt_multiply` performs for bandwidths `bw_a`, `bw_b`.
pub fn bt_product_count(n_b: usize, bw_a: usize, bw_b: usize) -> u64 {
    let (ha, hb) = ((bw_a - 1) / 2, (bw_b - 1) / 2);
    let hc = (ha + hb).min(n_b - 1);
    let mut n = 0u64;
    for i in 0..n_b {
        for j in i.saturating_sub(hc)..=(i + hc).min(n_b - 1) {
            let lo = i.saturating_sub(ha).max(j.saturating_sub(hb));
            let hi = (i + ha).min(j + hb).min(n_b - 1);
            if hi >= lo {
                n += (hi - lo + 1) as u64;
            }
        }
    }
    n
}

/// Flops of one selected solve with `n_rhs` lesser/greater right-hand sides.
pub fn rgf_flops(n_b: usize, bs: usize, n_rhs: usize) -> u64 {
    let g = flops::gemm(bs, bs, bs);
    let steps = n_b.saturating_sub(1) as u64;
    let retarded = n_b as u64 * flops::inverse(bs) + 7 * steps * g;
    let lg = (2 + 20 * steps) * g;
    retarded + n_rhs as u64 * lg
}

fn fft_flops(len: usize, transforms: usize) -> u64 {
    let l = len as f64;
    (transforms as f64 * 5.0 * l * l.log2().max(1.0)) as u64
}

/// Nominal cost of the direct open-boundary solvers, per call.
const BEYN_EXTRA_UNITS: u64 = 32;
const DOUBLING_STEPS: u64 = 8;

/// Problem dimensions entering the flop model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelDims {
    pub n_e: usize,
    pub n_b_g: usize,
    pub bs_g: usize,
    pub n_b_w: usize,
    pub bs_w: usize,
    /// Block bandwidth of the assembled interaction.
    pub bw_v: usize,
    pub n_quad: usize,
}

/// Symbolic flops of one SCBA iteration with every surface function solved
/// directly (no memoizer), per report category.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlopModel {
    pub categories: Vec<(String, u64)>,
}

impl FlopModel {
    pub fn new(d: &ModelDims) -> Self {
        let ne = d.n_e as u64;
        let unit = |n: usize| 8 * (n as u64).pow(3);
        let beyn = |n: usize| d.n_quad as u64 * flops::lu_solve(n, n) + BEYN_EXTRA_UNITS * unit(n) + 2 * unit(n);
        // terms (5 products), doubling start (3) and steps (3 each), boundary (2)
        let lyapunov = (5 + 3 + 3 * DOUBLING_STEPS + 2) * unit(d.bs_w);
        let g = flops::gemm(d.bs_w, d.bs_w, d.bs_w);
        let lhs = bt_product_count(d.n_b_w, d.bw_v, 3) * g;
        let bw_vp = (d.bw_v + 2).min(2 * d.n_b_w - 1);
        let rhs = 2 * (bt_product_count(d.n_b_w, d.bw_v, 3) + bt_product_count(d.n_b_w, bw_vp, d.bw_v)) * g;
        let n_ent = EntrySet::block_tridiagonal(d.n_b_g, d.bs_g).len();
        // 6 convolutions of 3 transforms at length 2 N_E, one fermionic and one
        // bosonic causality reconstruction (3 transforms at 2 N_E and 4 N_E)
        let conv = 7 * fft_flops(2 * d.n_e, 3 * n_ent) + fft_flops(4 * d.n_e, 3 * n_ent);
        let categories = vec![
            (CATEGORIES[0].to_string(), ne * 2 * beyn(d.bs_g)),
            (CATEGORIES[1].to_string(), ne * rgf_flops(d.n_b_g, d.bs_g, 2)),
            (CATEGORIES[2].to_string(), ne * 2 * beyn(d.bs_w)),
            (CATEGORIES[3].to_string(), ne * 4 * lyapunov),
            (CATEGORIES[4].to_string(), ne * lhs),
            (CATEGORIES[5].to_string(), ne * rhs),
            (CATEGORIES[6].to_string(), ne * rgf_flops(d.n_b_w, d.bs_w, 2)),
            (CATEGORIES[7].to_string(), conv),
        ];
        FlopModel { categories }
    }

    pub fn get(&self, cat: &str) -> u64 {
        self.categories.iter().find(|(c, _)| c == cat).map_or(0, |(_, v)| *v)
    }

    pub fn per_iteration(&self) -> u64 {
        self.categories.iter().map(|(_, v)| v).sum()
    }

    /// A run of `iterations` iterations plus the final electron solve.
    pub fn run_total(&self, iterations: usize) -> u64 {
        iterations as u64 * self.per_iteration() + self.get(CATEGORIES[0]) + self.get(CATEGORIES[1])
    }
}
