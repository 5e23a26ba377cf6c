//! Device observables from the selected blocks of the electron Green's function.
//!
//! ```text
//! DOS_i(E)     = -Im Tr G^R_ii(E) / π
//! n_i          = -i sum_E Tr G^<_ii(E) dE / 2π
//! I_{i->i+1}   = c_I sum_E Tr[H_{i,i+1} G^<_{i+1,i} - H_{i+1,i} G^<_{i,i+1}] dE
//! ```
//!
//! Natural units (`e = ħ = 1`), one spin channel. Also holds the Caroli
//! transmission oracle for ballistic devices, which shares no code with the
//! selected solver.

use serde::Serialize;
use std::f64::consts::PI;

use super::C_I;
use crate::bt::{BlockMatrix, EnergyGrid};
use crate::error::{Error, Result};
use crate::linalg::{adj, c64, eye, inv, mm, CMat, C64};
use crate::obc::{fermi, obc_sancho_rubio, ContactBlocks, Side};
use crate::rgf::SelectedSolution;

/// Observables on the blocks of the electron system.
#[derive(Clone, Debug, Default, PartialEq, Serialize, serde::Deserialize)]
pub struct Observables {
    pub energies: Vec<f64>,
    /// `dos[e][i]`
    pub dos: Vec<Vec<f64>>,
    /// Electrons per transport cell.
    pub density: Vec<f64>,
    /// `current_spectrum[e][i]` for the bond between cells `i` and `i + 1`,
    /// without the `dE` weight.
    pub current_spectrum: Vec<Vec<f64>>,
    pub current: Vec<f64>,
}

impl Observables {
    /// Mean terminal current over the bonds.
    pub fn mean_current(&self) -> f64 {
        if self.current.is_empty() {
            0.0
        } else {
            self.current.iter().sum::<f64>() / self.current.len() as f64
        }
    }

    /// `max_i |I_i - mean| / |mean|`
    pub fn current_spread(&self) -> f64 {
        let m = self.mean_current();
        let dev = self.current.iter().map(|i| (i - m).abs()).fold(0.0, f64::max);
        if m == 0.0 {
            dev
        } else {
            dev / m.abs()
        }
    }

    /// Sum of energy-resolved pieces computed on disjoint energy slices, in
    /// energy order.
    pub fn concat(parts: Vec<Observables>) -> Observables {
        let mut out = Observables::default();
        for p in parts {
            out.energies.extend(p.energies);
            out.dos.extend(p.dos);
            out.current_spectrum.extend(p.current_spectrum);
            if out.density.is_empty() {
                out.density = p.density;
                out.current = p.current;
            } else {
                for (a, b) in out.density.iter_mut().zip(&p.density) {
                    *a += b;
                }
                for (a, b) in out.current.iter_mut().zip(&p.current) {
                    *a += b;
                }
            }
        }
        out
    }
}

/// `-Im Tr G^R_ii / π` per cell.
pub fn dos_at(g: &SelectedSolution) -> Vec<f64> {
    g.retarded.diag.iter().map(|d| -d.trace().im / PI).collect()
}

/// `-i Tr G^<_ii / 2π` per cell, before the `dE` weight.
pub fn density_at(g: &SelectedSolution) -> Result<Vec<f64>> {
    let gl = g.lesser.as_ref().ok_or_else(|| Error::InvalidInput("density needs G^<".into()))?;
    Ok(gl.diag.iter().map(|d| (c64(0.0, -1.0) * d.trace()).re / (2.0 * PI)).collect())
}

/// Bond currents at one energy, before the `dE` weight.
pub fn current_at(h: &BlockMatrix, g: &SelectedSolution) -> Result<Vec<f64>> {
    let gl = g.lesser.as_ref().ok_or_else(|| Error::InvalidInput("current needs G^<".into()))?;
    let nb = h.n_blocks();
    if gl.upper.len() + 1 != nb {
        return Err(Error::InvalidInput(format!(
            "current needs {} off-diagonal G^< blocks, have {}",
            nb.saturating_sub(1),
            gl.upper.len()
        )));
    }
    Ok((0..nb - 1)
        .map(|i| {
            let t = mm(&h.block(i, i + 1), &gl.lower(i)) - mm(&h.block(i + 1, i), &gl.upper[i]);
            C_I * t.trace().re
        })
        .collect())
}

/// Observables from the solutions at consecutive grid energies `first..`.
pub fn observables(h: &BlockMatrix, grid: &EnergyGrid, first: usize, sols: &[SelectedSolution]) -> Result<Observables> {
    let de = grid.de();
    let nb = h.n_blocks();
    let mut out = Observables {
        density: vec![0.0; nb],
        current: vec![0.0; nb.saturating_sub(1)],
        ..Default::default()
    };
    for (k, g) in sols.iter().enumerate() {
        out.energies.push(grid.energy(first + k));
        out.dos.push(dos_at(g));
        for (a, v) in out.density.iter_mut().zip(density_at(g)?) {
            *a += v * de;
        }
        let c = current_at(h, g)?;
        for (a, v) in out.current.iter_mut().zip(&c) {
            *a += v * de;
        }
        out.current_spectrum.push(c);
    }
    Ok(out)
}

/// Transmission `Tr[Γ_L G^R_{0,N-1} Γ_R G^A_{N-1,0}]` at energy `e` from a
/// dense inverse. The leads continue the boundary cells of `h` and carry the
/// broadening `eta`; the device itself carries none.
pub fn caroli_transmission(h: &BlockMatrix, e: f64, eta: f64) -> Result<f64> {
    let nb = h.n_blocks();
    let bs = h.block_size();
    if nb < 2 {
        return Err(Error::InvalidInput("transmission needs at least two cells".into()));
    }
    let z = c64(e, eta);
    let lead = |h0: CMat, hn: CMat, hb: CMat| -> Result<CMat> {
        let c = ContactBlocks::new(eye(bs) * z - h0, -hn, -hb, Side::Left, crate::bt::device::Subsystem::G)?;
        let (x, _) = obc_sancho_rubio(&c, 1e-14, 400)?;
        Ok(c.self_energy(&x))
    };
    let sl = lead(h.block(0, 0), h.block(1, 0), h.block(0, 1))?;
    let sr = lead(h.block(nb - 1, nb - 1), h.block(nb - 2, nb - 1), h.block(nb - 1, nb - 2))?;
    let n = nb * bs;
    let mut a = eye(n) * c64(e, 0.0) - h.to_dense();
    {
        let mut c = a.view_mut((0, 0), (bs, bs));
        c -= &sl;
    }
    {
        let mut c = a.view_mut((n - bs, n - bs), (bs, bs));
        c -= &sr;
    }
    let g = inv(&a, "caroli", 0)?;
    let g0n = g.view((0, n - bs), (bs, bs)).into_owned();
    let gamma = |s: &CMat| (s - adj(s)) * C64::new(0.0, 1.0);
    Ok(mm(&mm(&gamma(&sl), &g0n), &mm(&gamma(&sr), &adj(&g0n))).trace().re)
}

/// Landauer current `c_I sum_E T(E) (f_L - f_R) dE` on the grid.
pub fn landauer_current(h: &BlockMatrix, grid: &EnergyGrid, mu_left: f64, mu_right: f64, kt: f64) -> Result<f64> {
    let mut sum = 0.0;
    for e in grid.energies() {
        let df = fermi(e, mu_left, kt) - fermi(e, mu_right, kt);
        if df != 0.0 {
            sum += caroli_transmission(h, e, grid.eta)? * df;
        }
    }
    Ok(C_I * sum * grid.de())
}
