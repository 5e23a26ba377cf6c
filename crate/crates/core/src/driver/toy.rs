//! Seeded toy devices: a ladder of `n_orb` orbitals per primitive cell with
//! nearest-neighbour hopping and a short-ranged Coulomb interaction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bt::device::DeviceSpec;
use crate::error::Result;
use crate::linalg::{c64, zeros, CMat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyParams {
    pub n_orb: usize,
    pub n_u_g: usize,
    pub n_u_w: usize,
    pub n_b: usize,
    /// Hopping along the transport direction (eV).
    pub hopping: f64,
    /// Hopping between neighbouring orbitals of one cell (eV).
    pub transverse: f64,
    pub onsite: f64,
    /// Uniform random on-site shifts in `[-disorder/2, disorder/2]`.
    pub disorder: f64,
    /// On-site Coulomb energy (eV).
    pub coulomb: f64,
    /// Decay length of the interaction (Å).
    pub screening_length: f64,
    pub cell_length: f64,
    /// Interaction cutoff (Å). Below `cell_length` the interaction stays
    /// inside a primitive cell and the truncated W products are exact, which
    /// keeps the current conserved to roundoff.
    pub r_cut: f64,
    pub seed: u64,
}

impl Default for ToyParams {
    fn default() -> Self {
        ToyParams {
            n_orb: 2,
            n_u_g: 2,
            n_u_w: 2,
            n_b: 8,
            hopping: 1.0,
            transverse: 0.5,
            onsite: 0.0,
            disorder: 0.0,
            coulomb: 0.5,
            screening_length: 2.0,
            cell_length: 2.0,
            r_cut: 1.5,
            seed: 7,
        }
    }
}

/// Named parameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// One orbital per cell, `N_U = 1`.
    Chain,
    Toy,
    /// Dimensions of a 104-orbital silicon nanowire cell grouped 4/8 into
    /// 18/9 transport cells (synthetic couplings).
    Nw1,
}

impl std::str::FromStr for Preset {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chain" => Ok(Preset::Chain),
            "toy" => Ok(Preset::Toy),
            "nw1" => Ok(Preset::Nw1),
            _ => Err(crate::error::Error::InvalidInput(format!("unknown preset {s:?} (chain, toy, nw1)"))),
        }
    }
}

impl Preset {
    pub fn params(self) -> ToyParams {
        match self {
            Preset::Chain => ToyParams { n_orb: 1, n_u_g: 1, n_u_w: 1, transverse: 0.0, r_cut: 1.0, ..Default::default() },
            Preset::Toy => ToyParams::default(),
            Preset::Nw1 => ToyParams {
                n_orb: 104,
                n_u_g: 4,
                n_u_w: 8,
                n_b: 18,
                cell_length: 5.43,
                r_cut: 10.95,
                screening_length: 5.0,
                ..Default::default()
            },
        }
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Primitive blocks `v_{i,i+k}` of `U / (1 + r / λ)` for `r <= r_cut`,
/// over at most `max_range` neighbouring cells. Trailing zero blocks are
/// dropped.
pub fn screened_interaction(
    positions: &[[f64; 3]],
    cell_length: f64,
    r_cut: f64,
    coulomb: f64,
    screening_length: f64,
    max_range: usize,
) -> Vec<CMat> {
    let n = positions.len();
    let range = ((r_cut / cell_length).ceil() as usize).min(max_range);
    let mut puc_v = Vec::with_capacity(range + 1);
    for k in 0..=range {
        let mut v = zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                let mut rb = positions[b];
                rb[0] += k as f64 * cell_length;
                let r = dist(&positions[a], &rb);
                if r <= r_cut {
                    v[(a, b)] = c64(coulomb / (1.0 + r / screening_length), 0.0);
                }
            }
        }
        puc_v.push(v);
    }
    while puc_v.len() > 1 && puc_v.last().is_some_and(|v| v.norm() == 0.0) {
        puc_v.pop();
    }
    puc_v
}

/// Builds the device. Disorder is drawn once per orbital of the primitive
/// cell, so the periodic description stays valid; use it to break symmetries,
/// not to model a disordered wire.
pub fn toy_device(p: &ToyParams) -> Result<DeviceSpec> {
    let n = p.n_orb;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let positions: Vec<[f64; 3]> = (0..n).map(|a| [0.0, a as f64, 0.0]).collect();
    let mut h0 = zeros(n, n);
    for a in 0..n {
        let shift = if p.disorder > 0.0 { rng.gen_range(-0.5..0.5) * p.disorder } else { 0.0 };
        h0[(a, a)] = c64(p.onsite + shift, 0.0);
        if a + 1 < n {
            h0[(a, a + 1)] = c64(-p.transverse, 0.0);
            h0[(a + 1, a)] = c64(-p.transverse, 0.0);
        }
    }
    let h1 = CMat::identity(n, n) * c64(-p.hopping, 0.0);
    let puc_v = screened_interaction(&positions, p.cell_length, p.r_cut, p.coulomb, p.screening_length, p.n_u_w);
    let spec = DeviceSpec {
        n_orb_puc: n,
        n_u_g: p.n_u_g,
        n_u_w: p.n_u_w,
        n_b: p.n_b,
        puc_h: vec![h0, h1],
        puc_v,
        positions,
        cell_length: p.cell_length,
        r_cut: p.r_cut,
    };
    spec.validate(1e-12)?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt::device::{assemble_from_puc, Operator, Subsystem};

    #[test]
    fn default_toy_has_four_orbital_cells() {
        let d = toy_device(&ToyParams::default()).unwrap();
        let h = assemble_from_puc(&d, Operator::Hamiltonian, Subsystem::G).unwrap();
        assert_eq!((h.n_blocks(), h.block_size()), (8, 4));
        let hd = h.to_dense();
        assert_eq!((&hd - hd.adjoint()).norm(), 0.0);
        let v = assemble_from_puc(&d, Operator::Coulomb, Subsystem::W).unwrap();
        assert_eq!(v.block_size(), 4);
    }

    #[test]
    fn chain_preset_is_minimal() {
        let d = toy_device(&Preset::Chain.params()).unwrap();
        assert_eq!((d.block_size(Subsystem::G), d.n_u_g), (1, 1));
        assert_eq!(d.n_blocks(Subsystem::G).unwrap(), 8);
    }

    #[test]
    fn nw1_preset_matches_published_dimensions() {
        let d = toy_device(&Preset::Nw1.params()).unwrap();
        assert_eq!(d.n_orb_puc, 104);
        assert_eq!((d.n_u_g, d.n_u_w), (4, 8));
        assert_eq!((d.block_size(Subsystem::G), d.block_size(Subsystem::W)), (416, 832));
        assert_eq!((d.n_blocks(Subsystem::G).unwrap(), d.n_blocks(Subsystem::W).unwrap()), (18, 9));
        assert_eq!(d.n_ao(), 7488);
    }

    #[test]
    fn interaction_respects_cutoff() {
        let d = toy_device(&ToyParams::default()).unwrap();
        // neighbouring cells are 2 Å apart, beyond the cutoff
        assert_eq!(d.puc_v.len(), 1);
        let d = toy_device(&ToyParams { r_cut: 2.5, ..Default::default() }).unwrap();
        assert_eq!(d.puc_v.len(), 2);
    }
}
