//! Independent reference checks of every kernel, as run by
//! `gwtransport check-oracle`.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::bench::random_bt_system;
use super::run::{run_threads, Operators};
use super::solver::distributed_solve;
use super::toy::{toy_device, Preset};
use crate::bt::{BlockMatrix, EnergyGrid};
use crate::error::Result;
use crate::linalg::{c64, random_cmat, rel_err, CMat, C64};
use crate::obc::testing::{chain, chain_surface, random_lead};
use crate::obc::{lyapunov_solve, obc_beyn, obc_fixed_point, obc_sancho_rubio, BeynParams, LyapunovMethod};
use crate::rgf::{rgf_solve, SelectedSolution};
use crate::scba::convolve::{convolve_direct, convolve_energy, Mode, Spectra};
use crate::scba::observables::{landauer_current, observables};
use crate::scba::run::{ContactConfig, ScbaOptions};

/// One comparison against a reference.
#[derive(Clone, Debug, Serialize)]
pub struct OracleCheck {
    pub name: String,
    /// Largest deviation seen; relative unless the name says otherwise.
    pub deviation: f64,
    pub tolerance: f64,
    pub cases: usize,
}

impl OracleCheck {
    fn new(name: impl Into<String>, deviation: f64, tolerance: f64, cases: usize) -> Self {
        OracleCheck { name: name.into(), deviation, tolerance, cases }
    }

    pub fn passed(&self) -> bool {
        self.deviation <= self.tolerance
    }
}

impl fmt::Display for OracleCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {:<48} {:>10.3e} <= {:.0e} ({} cases)", self.name, self.deviation, self.tolerance, self.cases)
    }
}

fn stack_rel(a: &[CMat], b: &[CMat]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum();
    let den: f64 = b.iter().map(|y| y.norm_squared()).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

fn dense_block(d: &CMat, bs: usize, i: usize, j: usize) -> CMat {
    d.view((i * bs, j * bs), (bs, bs)).into_owned()
}

/// Relative deviation of every selected block group of `s` from `reference`.
pub fn solution_deviation(s: &SelectedSolution, reference: &SelectedSolution) -> f64 {
    let mut e = stack_rel(&s.retarded.diag, &reference.retarded.diag)
        .max(stack_rel(&s.retarded.upper, &reference.retarded.upper))
        .max(stack_rel(&s.retarded.lower, &reference.retarded.lower));
    for (a, b) in [(&s.lesser, &reference.lesser), (&s.greater, &reference.greater)] {
        match (a, b) {
            (Some(a), Some(b)) => e = e.max(stack_rel(&a.diag, &b.diag)).max(stack_rel(&a.upper, &b.upper)),
            (None, None) => {}
            _ => return f64::INFINITY,
        }
    }
    e
}

/// Selected blocks of `M^-1` and `M^-1 B M^-H` from a dense inverse.
fn dense_reference(m: &BlockMatrix, bs: &[&BlockMatrix]) -> Option<(Vec<CMat>, Vec<CMat>, Vec<CMat>, Vec<(Vec<CMat>, Vec<CMat>)>)> {
    let nb = m.n_blocks();
    let s = m.block_size();
    let g = m.to_dense().try_inverse()?;
    let diag = (0..nb).map(|i| dense_block(&g, s, i, i)).collect();
    let upper = (1..nb).map(|i| dense_block(&g, s, i - 1, i)).collect();
    let lower = (1..nb).map(|i| dense_block(&g, s, i, i - 1)).collect();
    let lg = bs
        .iter()
        .map(|b| {
            let x = &g * b.to_dense() * g.adjoint();
            ((0..nb).map(|i| dense_block(&x, s, i, i)).collect(), (1..nb).map(|i| dense_block(&x, s, i - 1, i)).collect())
        })
        .collect();
    Some((diag, upper, lower, lg))
}

/// Selected solve against a dense inverse over `n` random systems with
/// `N_B <= 10`, `N_BS <= 8`.
pub fn check_selected_solve(n: usize) -> Result<OracleCheck> {
    let mut worst: f64 = 0.0;
    for seed in 0..n as u64 {
        let nb = 1 + (seed as usize * 7) % 10;
        let bs = 1 + (seed as usize * 3) % 8;
        let (m, bl, bg) = random_bt_system(seed, nb, bs)?;
        let sol = rgf_solve(&m, Some(&bl), Some(&bg))?;
        let Some((d, u, l, lg)) = dense_reference(&m, &[&bl, &bg]) else {
            worst = f64::INFINITY;
            continue;
        };
        worst = worst.max(stack_rel(&sol.retarded.diag, &d)).max(stack_rel(&sol.retarded.upper, &u)).max(stack_rel(&sol.retarded.lower, &l));
        for (x, (xd, xu)) in [sol.lesser.as_ref(), sol.greater.as_ref()].into_iter().zip(&lg) {
            let x = x.expect("requested");
            worst = worst.max(stack_rel(&x.diag, xd)).max(stack_rel(&x.upper, xu));
        }
    }
    Ok(OracleCheck::new("selected solve vs dense inverse", worst, 1e-10, n))
}

/// Distributed against sequential solves: the largest deviation for each
/// `p_s` over `seeds` random systems of `2 p_s..=16` blocks.
pub fn check_distributed(p_ss: &[usize], seeds: usize) -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    for &p_s in p_ss {
        let mut worst: f64 = 0.0;
        for seed in 0..seeds as u64 {
            let span = 16 - 2 * p_s + 1;
            let nb = 2 * p_s + (seed as usize * 5) % span;
            let bs = 1 + (seed as usize) % 4;
            let (m, bl, bg) = random_bt_system(1000 + seed, nb, bs)?;
            let seq = rgf_solve(&m, Some(&bl), Some(&bg))?;
            let d = distributed_solve(&m, Some(&bl), Some(&bg), p_s)?;
            worst = worst.max(if p_s == 1 && d != seq { f64::INFINITY } else { solution_deviation(&d, &seq) });
        }
        let (name, tol) = if p_s == 1 { ("distributed p_s = 1 bitwise equal".to_string(), 0.0) } else { (format!("distributed p_s = {p_s} vs sequential"), 1e-9) };
        out.push(OracleCheck::new(name, worst, tol, seeds));
    }
    Ok(out)
}

/// FFT against direct energy sums, both modes, for each grid size.
pub fn check_convolution(n_es: &[usize]) -> Result<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let entries = 3;
    for &n_e in n_es {
        let mut a = Spectra::zeros(entries, n_e);
        let mut b = Spectra::zeros(entries, n_e);
        for k in 0..entries {
            a.entry_mut(k).copy_from_slice(random_cmat(&mut rng, n_e, 1).as_slice());
            b.entry_mut(k).copy_from_slice(random_cmat(&mut rng, n_e, 1).as_slice());
        }
        for mode in [Mode::Convolution, Mode::Correlation] {
            let pf = C64::new(0.3, -1.1);
            let f = convolve_energy(&a, &b, mode, pf, 0.01)?;
            let d = convolve_direct(&a, &b, mode, pf, 0.01)?;
            worst = worst.max(f.rel_diff(&d));
        }
    }
    Ok(OracleCheck::new("FFT convolution vs direct sum", worst, 1e-10, 2 * n_es.len()))
}

/// Open-boundary solvers on random leads and on the chain with a closed form.
pub fn check_obc(n_leads: usize) -> Result<Vec<OracleCheck>> {
    let params = BeynParams::default();
    let mut beyn_sancho: f64 = 0.0;
    let mut fp: f64 = 0.0;
    let mut fp_cases = 0;
    for seed in 0..n_leads as u64 {
        let n = 1 + seed as usize % 4;
        let energy = -0.5 + 0.1 * (seed % 11) as f64;
        let c = random_lead(seed, n, energy, 0.05, 0.3);
        let b = obc_beyn(&c, &params)?.x;
        let (s, _) = obc_sancho_rubio(&c, 1e-13, 400)?;
        beyn_sancho = beyn_sancho.max(rel_err(&b, &s));
        let r = obc_fixed_point(&c, &CMat::zeros(n, n), 20_000, 1e-14)?;
        if r.converged {
            fp = fp.max(rel_err(&r.x, &s));
            fp_cases += 1;
        }
    }
    let mut chain_dev: f64 = 0.0;
    let energies = [-1.5, -0.7, 0.0, 0.4, 1.1, 1.9];
    for e in energies {
        let z = c64(e, 1e-3);
        let c = chain(z, 1.0);
        let exact = chain_surface(z, 1.0);
        let b = obc_beyn(&c, &params)?.x[(0, 0)];
        let (s, _) = obc_sancho_rubio(&c, 1e-14, 400)?;
        chain_dev = chain_dev.max((b - exact).norm() / exact.norm()).max((s[(0, 0)] - exact).norm() / exact.norm());
    }
    Ok(vec![
        OracleCheck::new("Beyn vs Sancho-Rubio on random leads", beyn_sancho, 1e-6, n_leads),
        OracleCheck::new("fixed point vs Sancho-Rubio (where convergent)", fp, 1e-6, fp_cases),
        OracleCheck::new("Beyn and Sancho-Rubio vs closed-form chain", chain_dev, 1e-8, energies.len()),
    ])
}

/// Doubling against the Kronecker solve for block sizes `1..=max_n`.
pub fn check_lyapunov(max_n: usize) -> Result<OracleCheck> {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in 1..=max_n {
        for (k, rho) in [0.3, 0.7, 0.95].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64((n * 10 + k) as u64);
            let a = random_cmat(&mut rng, n, n);
            let r = crate::linalg::eig(&a).0.iter().map(|l| l.norm()).fold(0.0, f64::max);
            let a = a * c64(rho / r, 0.0);
            let q0 = random_cmat(&mut rng, n, n);
            let q = &q0 - q0.adjoint();
            let wd = lyapunov_solve(&a, &q, LyapunovMethod::Doubling, 1e-15)?;
            let wk = lyapunov_solve(&a, &q, LyapunovMethod::KronOracle, 0.0)?;
            worst = worst.max(rel_err(&wd, &wk));
            cases += 1;
        }
    }
    Ok(OracleCheck::new("Lyapunov doubling vs Kronecker", worst, 1e-10, cases))
}

/// A short SCBA run with every identity and the direct convolution recorded.
pub fn check_scba_identities(n_e: usize, iterations: usize) -> Result<Vec<OracleCheck>> {
    let ops = Operators::of(&toy_device(&Preset::Toy.params())?)?;
    let grid = EnergyGrid::new(-4.0, 4.0, n_e, 1e-3)?;
    let contacts = ContactConfig { mu_left: 0.2, mu_right: -0.2, kt: 0.1 };
    let opts = ScbaOptions { max_iter: iterations, oracle: true, ..Default::default() };
    let (_, _, s) = run_threads(ops.problem(&grid, &contacts), &opts, 1, 1)?;
    let max = |f: &dyn Fn(&crate::scba::run::IterationRecord) -> f64| s.history.iter().map(f).fold(0.0, f64::max);
    let n = s.history.len();
    Ok(vec![
        OracleCheck::new("G: X> - X< = X^R - X^A", max(&|r| r.g_identity), 1e-9, n),
        OracleCheck::new("P: X> - X< = X^R - X^A", max(&|r| r.p_identity), 1e-9, n),
        OracleCheck::new("Sigma: X> - X< = X^R - X^A", max(&|r| r.sigma_identity), 1e-9, n),
        OracleCheck::new("SCBA convolutions vs direct sum", max(&|r| r.fft_direct.unwrap_or(f64::INFINITY)), 1e-10, n),
    ])
}

/// Relative deviation of the ballistic driver current from the Landauer
/// formula with Caroli transmission, over `points` symmetric biases.
pub fn check_landauer(points: usize) -> Result<OracleCheck> {
    let ops = Operators::of(&toy_device(&Preset::Chain.params())?)?;
    let grid = EnergyGrid::new(-2.5, 2.5, 200, 1e-3)?;
    let opts = ScbaOptions { interacting: false, ..Default::default() };
    let mut worst: f64 = 0.0;
    for k in 0..points {
        let bias = 0.05 + 1.0 * k as f64 / points.max(2) as f64;
        let contacts = ContactConfig { mu_left: bias / 2.0, mu_right: -bias / 2.0, kt: 0.05 };
        let (g, _, _) = run_threads(ops.problem(&grid, &contacts), &opts, 1, 1)?;
        let current = observables(&ops.h, &grid, 0, &g)?.mean_current();
        let reference = landauer_current(&ops.h, &grid, contacts.mu_left, contacts.mu_right, contacts.kt)?;
        worst = worst.max((current - reference).abs() / reference.abs());
    }
    Ok(OracleCheck::new("ballistic current vs Landauer", worst, 1e-3, points))
}

/// Every check. `quick` shrinks the sample counts.
pub fn check_all(quick: bool) -> Result<Vec<OracleCheck>> {
    let k = |full: usize, small: usize| if quick { small } else { full };
    let mut out = vec![check_selected_solve(k(100, 20))?];
    out.extend(check_distributed(&[1, 2, 4], k(50, 10))?);
    out.push(check_convolution(&[8, 64, 128])?);
    out.extend(check_obc(k(40, 10))?);
    out.push(check_lyapunov(8)?);
    out.extend(check_scba_identities(k(128, 32), k(3, 2))?);
    out.push(check_landauer(k(20, 5))?);
    Ok(out)
}
