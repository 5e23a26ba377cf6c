//! Memoisation of boundary surface functions across SCBA iterations.
//!
//! Between iterations the lead blocks drift only slowly, so the previous
//! surface function is usually an excellent starting point for a short
//! fixed-point refresh. Whether the refresh is trusted is decided per call
//! from two trial updates: with `d1` the first relative update and `r` the
//! observed contraction `d2 / d1`, the budgeted iteration is used when
//! `d1 * r^n_fpi < tol`; otherwise the direct solver runs. The refresh stops
//! early once an update drops below `tol / 1000`.

use std::collections::HashMap;

use serde::Serialize;

use super::lyapunov::{stein_solve, stein_step, LyapunovMethod};
use super::{solve_retarded, BeynParams, ContactBlocks, RetardedMethod, Side};
use crate::bt::device::Subsystem;
use crate::error::Result;
use crate::linalg::{inv, CMat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Kind {
    Retarded,
    Lesser,
    Greater,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey {
    pub subsystem: Subsystem,
    pub side: Side,
    pub energy_index: usize,
    pub kind: Kind,
}

/// A surface-function problem that can be solved directly or refined by
/// fixed-point steps from a previous solution.
pub trait SurfaceProblem {
    fn direct(&self) -> Result<CMat>;
    fn step(&self, x: &CMat) -> Result<CMat>;
    /// Defining-equation residual of a candidate solution.
    fn residual(&self, x: &CMat) -> f64;
}

/// Retarded surface function `x = (m - n x n')^{-1}`.
pub struct RetardedSurface<'a> {
    pub contact: &'a ContactBlocks,
    pub method: RetardedMethod,
    pub beyn: &'a BeynParams,
}

impl SurfaceProblem for RetardedSurface<'_> {
    fn direct(&self) -> Result<CMat> {
        solve_retarded(self.contact, self.method, self.beyn)
    }

    fn step(&self, x: &CMat) -> Result<CMat> {
        inv(&self.contact.schur(x), "memoized surface step", 0)
    }

    fn residual(&self, x: &CMat) -> f64 {
        self.contact.residual(x)
    }
}

/// Lesser/greater surface function `w = q + a w a^H`.
pub struct SteinSurface<'a> {
    pub a: &'a CMat,
    pub q: &'a CMat,
    pub method: LyapunovMethod,
    pub tol: f64,
}

impl SurfaceProblem for SteinSurface<'_> {
    fn direct(&self) -> Result<CMat> {
        stein_solve(self.a, self.q, 1.0, self.method, self.tol)
    }

    fn step(&self, w: &CMat) -> Result<CMat> {
        Ok(stein_step(self.a, self.q, w))
    }

    fn residual(&self, w: &CMat) -> f64 {
        let scale = self.q.norm().max(f64::MIN_POSITIVE);
        (stein_step(self.a, self.q, w) - w).norm() / scale
    }
}

#[derive(Clone, Debug)]
struct Entry {
    x: CMat,
    last_update: f64,
    /// Residual of the most recent direct solve for this key.
    direct_residual: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct MemoStats {
    pub direct_calls: u64,
    pub memoized_calls: u64,
    /// Memoized attempts abandoned for the direct solver mid-budget.
    pub fallbacks: u64,
}

impl MemoStats {
    pub fn merge(&mut self, o: &MemoStats) {
        self.direct_calls += o.direct_calls;
        self.memoized_calls += o.memoized_calls;
        self.fallbacks += o.fallbacks;
    }

    pub fn memoized_fraction(&self) -> f64 {
        let total = self.direct_calls + self.memoized_calls;
        if total == 0 {
            0.0
        } else {
            self.memoized_calls as f64 / total as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct SurfaceCache {
    entries: HashMap<CacheKey, Entry>,
    pub n_fpi_retarded: usize,
    pub n_fpi_lg: usize,
    pub enabled: bool,
    pub stats: MemoStats,
}

impl Default for SurfaceCache {
    fn default() -> Self {
        SurfaceCache {
            entries: HashMap::new(),
            n_fpi_retarded: 20,
            n_fpi_lg: 10,
            enabled: true,
            stats: MemoStats::default(),
        }
    }
}

fn rel_change(new: &CMat, old: &CMat) -> f64 {
    let n = new.norm();
    if n == 0.0 {
        (new - old).norm()
    } else {
        (new - old).norm() / n
    }
}

impl SurfaceCache {
    pub fn new(n_fpi_retarded: usize, n_fpi_lg: usize, enabled: bool) -> Self {
        SurfaceCache { n_fpi_retarded, n_fpi_lg, enabled, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &CacheKey) -> Option<&CMat> {
        self.entries.get(key).map(|e| &e.x)
    }

    pub fn last_update(&self, key: &CacheKey) -> Option<f64> {
        self.entries.get(key).map(|e| e.last_update)
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Moves all entries of `other` into this cache and accumulates its statistics.
    pub fn absorb(&mut self, other: SurfaceCache) {
        self.entries.extend(other.entries);
        self.stats.merge(&other.stats);
    }

    /// Splits off the entries whose energy index satisfies `pred`.
    pub fn split_off(&mut self, pred: impl Fn(usize) -> bool) -> SurfaceCache {
        let mut out = SurfaceCache::new(self.n_fpi_retarded, self.n_fpi_lg, self.enabled);
        let keys: Vec<CacheKey> = self.entries.keys().filter(|k| pred(k.energy_index)).copied().collect();
        for k in keys {
            let e = self.entries.remove(&k).expect("present");
            out.entries.insert(k, e);
        }
        out
    }

    fn budget(&self, kind: Kind) -> usize {
        match kind {
            Kind::Retarded => self.n_fpi_retarded,
            Kind::Lesser | Kind::Greater => self.n_fpi_lg,
        }
    }

    /// Surface function for `key`, refreshed from the cache when the
    /// contraction estimate predicts convergence within the budget.
    ///
    /// A refreshed value is only returned if its residual is within ten times
    /// `max(direct residual, tol)`; otherwise the direct solver runs.
    pub fn memoized(&mut self, key: CacheKey, tol: f64, problem: &impl SurfaceProblem) -> Result<CMat> {
        let n_fpi = self.budget(key.kind);
        let cached = if self.enabled {
            self.entries.get(&key).map(|e| (e.x.clone(), e.direct_residual))
        } else {
            None
        };
        if let Some((x0, ref_res)) = cached {
            match try_refresh(problem, &x0, n_fpi, tol) {
                Some((x, upd)) if problem.residual(&x) <= 10.0 * ref_res.max(tol) => {
                    self.stats.memoized_calls += 1;
                    self.entries.insert(key, Entry { x: x.clone(), last_update: upd, direct_residual: ref_res });
                    return Ok(x);
                }
                _ => self.stats.fallbacks += 1,
            }
        }
        let x = problem.direct()?;
        self.stats.direct_calls += 1;
        let direct_residual = problem.residual(&x);
        self.entries.insert(key, Entry { x: x.clone(), last_update: f64::NAN, direct_residual });
        Ok(x)
    }
}

/// Relative updates below this are roundoff; their ratio says nothing about
/// the contraction.
const ROUNDOFF: f64 = 1e-13;

fn try_refresh(problem: &impl SurfaceProblem, x0: &CMat, n_fpi: usize, tol: f64) -> Option<(CMat, f64)> {
    if n_fpi < 2 {
        return None;
    }
    let x1 = problem.step(x0).ok()?;
    let d1 = rel_change(&x1, x0);
    let x2 = problem.step(&x1).ok()?;
    let d2 = rel_change(&x2, &x1);
    if !d1.is_finite() || !d2.is_finite() {
        log::trace!("memo: non-finite trial update");
        return None;
    }
    let rho = if d1 > ROUNDOFF { d2 / d1 } else { 0.0 };
    if rho >= 1.0 || d1 * rho.powi(n_fpi as i32) >= tol {
        log::trace!("memo: rejected, d1 {d1:.2e} d2 {d2:.2e} rho {rho:.3}");
        return None;
    }
    let mut x = x2;
    let mut d = d2;
    let guard = 10.0 * d1.max(ROUNDOFF);
    let done = (tol * 1e-3).max(ROUNDOFF);
    for _ in 2..n_fpi {
        if d <= done {
            break;
        }
        let next = problem.step(&x).ok()?;
        let dn = rel_change(&next, &x);
        if !dn.is_finite() || dn > guard {
            return None;
        }
        x = next;
        d = dn;
    }
    Some((x, d))
}
