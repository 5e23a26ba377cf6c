//! Result tables and the run report.
//!
//! Tables are CSV with a header row; energies are in eV, everything else in
//! natural units. Numbers are written in shortest round-trip form, so a
//! deterministic run produces byte-identical tables. Wall times appear only
//! in `report.json`.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::device_file::DeviceSummary;
use super::run::RunResult;
use crate::error::{Error, Result};
use crate::obc::MemoStats;
use crate::scba::run::{IterationRecord, CATEGORIES};

/// Files written by [`write_outputs`].
pub const RESULT_FILES: [&str; 5] = ["dos.csv", "density.csv", "current.csv", "current_spectrum.csv", "residuals.csv"];

fn table(header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn residual_table(history: &[IterationRecord]) -> String {
    let mut s = String::from("iteration,residual,g_identity,p_identity,sigma_identity,fft_direct,memo_direct,memo_memoized,memo_fallbacks\n");
    for r in history {
        let fft = r.fft_direct.map_or(String::new(), |v| format!("{v:?}"));
        let _ = writeln!(
            s,
            "{},{:?},{:?},{:?},{:?},{},{},{},{}",
            r.iteration, r.residual, r.g_identity, r.p_identity, r.sigma_identity, fft, r.memo.direct_calls, r.memo.memoized_calls, r.memo.fallbacks
        );
    }
    s
}

#[derive(Serialize)]
struct Category {
    name: &'static str,
    seconds: f64,
    flops: u64,
}

#[derive(Serialize)]
struct MemoReport {
    #[serde(flatten)]
    stats: MemoStats,
    memoized_fraction: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    device: &'a DeviceSummary,
    converged: bool,
    iterations: usize,
    mean_current: f64,
    current_spread: f64,
    kernels: Vec<Category>,
    memoizer: MemoReport,
    transposition_lg_fraction: f64,
    history: &'a [IterationRecord],
}

/// Writes the tables and `report.json` into `dir`.
pub fn write_outputs(dir: &Path, result: &RunResult, device: &DeviceSummary) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let o = &result.observables;
    let n_cells = o.density.len();
    let n_bonds = o.current.len();
    let cells: Vec<String> = (0..n_cells).map(|i| format!("cell_{i}")).collect();
    let bonds: Vec<String> = (0..n_bonds).map(|i| format!("bond_{i}_{}", i + 1)).collect();

    let with_energy = |names: &[String]| -> Vec<String> { std::iter::once("energy_eV".to_string()).chain(names.iter().cloned()).collect() };
    let dos = table(&with_energy(&cells), o.energies.iter().zip(&o.dos).map(|(e, d)| std::iter::once(*e).chain(d.iter().copied()).collect()));
    let spec = table(
        &with_energy(&bonds),
        o.energies.iter().zip(&o.current_spectrum).map(|(e, c)| std::iter::once(*e).chain(c.iter().copied()).collect()),
    );
    let indexed = |index: &str, name: &str, vals: &[f64]| -> String {
        let mut s = format!("{index},{name}\n");
        for (i, v) in vals.iter().enumerate() {
            let _ = writeln!(s, "{i},{v:?}");
        }
        s
    };
    let density = indexed("cell", "density", &o.density);
    let current = indexed("bond", "current", &o.current);
    for (name, text) in RESULT_FILES.iter().zip([dos, density, current, spec, residual_table(&result.summary.history)]) {
        std::fs::write(dir.join(name), text)?;
    }

    let s = &result.summary;
    let report = Report {
        device,
        converged: s.converged,
        iterations: s.iterations,
        mean_current: o.mean_current(),
        current_spread: o.current_spread(),
        kernels: CATEGORIES.iter().map(|&name| Category { name, seconds: s.timings.get(name), flops: s.timings.flops.get(name).copied().unwrap_or(0) }).collect(),
        memoizer: MemoReport { stats: s.memo, memoized_fraction: s.memo.memoized_fraction() },
        transposition_lg_fraction: s.transpose.lg_fraction(),
        history: &s.history,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(dir.join("report.json"), json + "\n")?;
    Ok(())
}

/// Plain-text summary for the terminal.
pub fn format_summary(result: &RunResult) -> String {
    let s = &result.summary;
    let o = &result.observables;
    let mut out = String::new();
    let _ = writeln!(out, "{} after {} iterations", if s.converged { "converged" } else { "not converged" }, s.iterations);
    if let Some(last) = s.history.last() {
        let _ = writeln!(out, "final residual {:.3e}", last.residual);
    }
    let _ = writeln!(out, "current {:.6e} (spread {:.2e})", o.mean_current(), o.current_spread());
    let _ = writeln!(out, "{:<24} {:>10} {:>12}", "kernel", "seconds", "Gflop");
    for c in CATEGORIES {
        let f = s.timings.flops.get(c).copied().unwrap_or(0) as f64 * 1e-9;
        let _ = writeln!(out, "{c:<24} {:>10.3} {f:>12.3}", s.timings.get(c));
    }
    let _ = writeln!(
        out,
        "memoizer: {} memoized, {} direct, {} fallbacks ({:.1}% memoized)",
        s.memo.memoized_calls,
        s.memo.direct_calls,
        s.memo.fallbacks,
        100.0 * s.memo.memoized_fraction()
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scba::observables::Observables;
    use crate::scba::run::RunSummary;

    fn result() -> RunResult {
        RunResult {
            observables: Observables {
                energies: vec![-0.5, 0.5],
                dos: vec![vec![0.1, 0.2], vec![0.3, 0.4]],
                density: vec![1.0, 1.5],
                current_spectrum: vec![vec![0.01], vec![0.02]],
                current: vec![0.015],
            },
            summary: RunSummary { converged: true, iterations: 1, history: vec![IterationRecord { iteration: 1, residual: 0.25, ..Default::default() }], ..Default::default() },
        }
    }

    #[test]
    fn tables_have_headers_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let dev = DeviceSummary { n_orb_puc: 1, n_u_g: 1, n_u_w: 1, n_bs_g: 1, n_bs_w: 1, n_b_g: 2, n_b_w: 2, n_ao: 2 };
        write_outputs(dir.path(), &result(), &dev).unwrap();
        let dos = std::fs::read_to_string(dir.path().join("dos.csv")).unwrap();
        assert_eq!(dos, "energy_eV,cell_0,cell_1\n-0.5,0.1,0.2\n0.5,0.3,0.4\n");
        let cur = std::fs::read_to_string(dir.path().join("current.csv")).unwrap();
        assert_eq!(cur, "bond,current\n0,0.015\n");
        let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(rep["kernels"].as_array().unwrap().len(), CATEGORIES.len());
        assert_eq!(rep["kernels"][0]["name"], "G: OBC");
        assert!(format_summary(&result()).contains("W: Assembly: Lyapunov"));
    }
}
