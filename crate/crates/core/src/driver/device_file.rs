//! Device files.
//!
//! The native format is TOML:
//!
//! ```toml
//! n_orb = 2            # orbitals per primitive cell
//! n_u_g = 2            # primitive cells per transport cell (electrons)
//! n_u_w = 2            # primitive cells per transport cell (interaction)
//! n_b = 8              # electron transport cells
//! cell_length = 2.0    # Å, period along x
//! r_cut = 1.5          # Å
//! positions = [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
//!
//! [[hamiltonian]]
//! block = [1, 1]       # coupling of primitive cell 1 to cell 1
//! values = [[0.0, 0.0], [-0.5, 0.0], [-0.5, 0.0], [0.0, 0.0]]
//!
//! [[hamiltonian]]
//! block = [1, 2]
//! values = [[-1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [-1.0, 0.0]]
//!
//! [[coulomb]]
//! block = [1, 1]
//! values = [[0.5, 0.0], [0.33, 0.0], [0.33, 0.0], [0.5, 0.0]]
//! ```
//!
//! Block indices are 1-based and the first index is always 1; `values` are
//! `(re, im)` pairs in row-major order. Couplings to cells on the left follow
//! from Hermiticity. Missing intermediate blocks are zero.
//!
//! [`import_hr`] reads the Wannier `_hr.dat` layout (header line, orbital
//! count, R-vector count, degeneracies, then `R1 R2 R3 i j Re Im` rows) for a
//! wire along the first lattice vector.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use toml::Spanned;

use super::toy::screened_interaction;
use crate::bt::device::{DeviceSpec, Subsystem};
use crate::error::{Error, Result};
use crate::linalg::{adj, c64, zeros, CMat};

/// Tolerance on the Hermiticity of the on-site blocks.
pub const HERMITICITY_TOL: f64 = 1e-10;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockEntry {
    block: Spanned<[usize; 2]>,
    values: Spanned<Vec<[f64; 2]>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceFile {
    n_orb: usize,
    n_u_g: usize,
    n_u_w: usize,
    n_b: usize,
    cell_length: f64,
    r_cut: f64,
    positions: Spanned<Vec<[f64; 3]>>,
    hamiltonian: Vec<BlockEntry>,
    #[serde(default)]
    coulomb: Vec<BlockEntry>,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Parses TOML text, reporting the line of the offending field.
pub fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, path: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: path.into(),
        line: e.span().map_or(0, |s| line_of(text, s.start)),
        msg: e.message().to_string(),
    })
}

fn collect_blocks(text: &str, path: &str, name: &str, entries: &[BlockEntry], n: usize) -> Result<Vec<CMat>> {
    let mut by_shift = BTreeMap::new();
    for e in entries {
        let err = |span: std::ops::Range<usize>, msg: String| Error::Parse { path: path.into(), line: line_of(text, span.start), msg };
        let [i, j] = *e.block.get_ref();
        if i != 1 || j < 1 {
            return Err(err(e.block.span(), format!("{name}: block [{i}, {j}] must have the form [1, j] with j >= 1")));
        }
        let vals = e.values.get_ref();
        if vals.len() != n * n {
            return Err(err(e.values.span(), format!("{name}: block [1, {j}] has {} values, expected {}", vals.len(), n * n)));
        }
        let m = CMat::from_fn(n, n, |r, c| {
            let [re, im] = vals[r * n + c];
            c64(re, im)
        });
        if by_shift.insert(j - 1, m).is_some() {
            return Err(err(e.block.span(), format!("{name}: block [1, {j}] given twice")));
        }
    }
    let Some(&last) = by_shift.keys().next_back() else {
        return Ok(vec![zeros(n, n)]);
    };
    Ok((0..=last).map(|k| by_shift.remove(&k).unwrap_or_else(|| zeros(n, n))).collect())
}

/// Parses a device file from text; `path` only labels diagnostics.
pub fn parse_device(text: &str, path: &str) -> Result<DeviceSpec> {
    let f: DeviceFile = parse_toml(text, path)?;
    if f.positions.get_ref().len() != f.n_orb {
        return Err(Error::Parse {
            path: path.into(),
            line: line_of(text, f.positions.span().start),
            msg: format!("{} positions for n_orb = {}", f.positions.get_ref().len(), f.n_orb),
        });
    }
    let spec = DeviceSpec {
        n_orb_puc: f.n_orb,
        n_u_g: f.n_u_g,
        n_u_w: f.n_u_w,
        n_b: f.n_b,
        puc_h: collect_blocks(text, path, "hamiltonian", &f.hamiltonian, f.n_orb)?,
        puc_v: collect_blocks(text, path, "coulomb", &f.coulomb, f.n_orb)?,
        positions: f.positions.into_inner(),
        cell_length: f.cell_length,
        r_cut: f.r_cut,
    };
    spec.validate(HERMITICITY_TOL)?;
    Ok(spec)
}

pub fn load_device(path: &Path) -> Result<DeviceSpec> {
    let text = crate::error::read_text(path)?;
    parse_device(&text, &path.display().to_string())
}

fn write_blocks(out: &mut String, name: &str, blocks: &[CMat]) {
    for (k, b) in blocks.iter().enumerate() {
        if k > 0 && b.iter().all(|z| z.norm_sqr() == 0.0) {
            continue;
        }
        let _ = writeln!(out, "\n[[{name}]]\nblock = [1, {}]\nvalues = [", k + 1);
        for r in 0..b.nrows() {
            let row: Vec<String> = (0..b.ncols()).map(|c| format!("[{:?}, {:?}]", b[(r, c)].re, b[(r, c)].im)).collect();
            let _ = writeln!(out, "  {},", row.join(", "));
        }
        out.push_str("]\n");
    }
}

/// Serializes a device in the native format. Values are written with full
/// round-trip precision.
pub fn device_to_string(d: &DeviceSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n_orb = {}\nn_u_g = {}\nn_u_w = {}\nn_b = {}", d.n_orb_puc, d.n_u_g, d.n_u_w, d.n_b);
    let _ = writeln!(out, "cell_length = {:?}\nr_cut = {:?}", d.cell_length, d.r_cut);
    let pos: Vec<String> = d.positions.iter().map(|p| format!("[{:?}, {:?}, {:?}]", p[0], p[1], p[2])).collect();
    let _ = writeln!(out, "positions = [\n  {},\n]", pos.join(",\n  "));
    write_blocks(&mut out, "hamiltonian", &d.puc_h);
    write_blocks(&mut out, "coulomb", &d.puc_v);
    out
}

pub fn save_device(d: &DeviceSpec, path: &Path) -> Result<()> {
    std::fs::write(path, device_to_string(d))?;
    Ok(())
}

/// Grouping and sizes of a device.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct DeviceSummary {
    pub n_orb_puc: usize,
    pub n_u_g: usize,
    pub n_u_w: usize,
    pub n_bs_g: usize,
    pub n_bs_w: usize,
    pub n_b_g: usize,
    pub n_b_w: usize,
    pub n_ao: usize,
}

impl DeviceSummary {
    pub fn of(d: &DeviceSpec) -> Result<Self> {
        Ok(DeviceSummary {
            n_orb_puc: d.n_orb_puc,
            n_u_g: d.n_u_g,
            n_u_w: d.n_u_w,
            n_bs_g: d.block_size(Subsystem::G),
            n_bs_w: d.block_size(Subsystem::W),
            n_b_g: d.n_blocks(Subsystem::G)?,
            n_b_w: d.n_blocks(Subsystem::W)?,
            n_ao: d.n_ao(),
        })
    }
}

impl std::fmt::Display for DeviceSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "primitive cell {} orbitals; N_U {}/{}; N_BS {}/{}; N_B {}/{}; N_AO {}",
            self.n_orb_puc, self.n_u_g, self.n_u_w, self.n_bs_g, self.n_bs_w, self.n_b_g, self.n_b_w, self.n_ao
        )
    }
}

/// Everything an `_hr.dat` file does not say about the device.
#[derive(Clone, Debug, PartialEq, serde::Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HrImport {
    pub n_u_g: usize,
    pub n_u_w: usize,
    pub n_b: usize,
    pub cell_length: f64,
    pub r_cut: f64,
    /// Interaction `coulomb / (1 + r / screening_length)` within `r_cut`.
    pub coulomb: f64,
    pub screening_length: f64,
    /// Orbital positions in the primitive cell; defaults to a line along y
    /// with 1 Å spacing.
    pub positions: Option<Vec<[f64; 3]>>,
}

impl Default for HrImport {
    fn default() -> Self {
        HrImport {
            n_u_g: 1,
            n_u_w: 1,
            n_b: 8,
            cell_length: 1.0,
            r_cut: 0.5,
            coulomb: 0.5,
            screening_length: 2.0,
            positions: None,
        }
    }
}

/// Reads an `_hr.dat` Hamiltonian. Hoppings are divided by the degeneracy of
/// their R-vector; couplings with a non-zero transverse R component are
/// rejected.
pub fn import_hr(text: &str, path: &str, opts: &HrImport) -> Result<DeviceSpec> {
    let perr = |line: usize, msg: String| Error::Parse { path: path.into(), line, msg };
    let mut lines = text.lines().enumerate().skip(1);
    let mut next_line = |what: &str| lines.next().ok_or_else(|| perr(0, format!("file ends before {what}")));
    let parse_usize = |(ln, l): (usize, &str), what: &str| -> Result<usize> {
        l.trim().parse().map_err(|_| perr(ln + 1, format!("expected {what}, found {l:?}")))
    };
    let n = parse_usize(next_line("the orbital count")?, "the orbital count")?;
    let nrpts = parse_usize(next_line("the R-vector count")?, "the R-vector count")?;
    let mut degen = Vec::with_capacity(nrpts);
    while degen.len() < nrpts {
        let (ln, l) = next_line("the degeneracies")?;
        for tok in l.split_whitespace() {
            degen.push(tok.parse::<f64>().map_err(|_| perr(ln + 1, format!("bad degeneracy {tok:?}")))?);
        }
    }
    if degen.len() != nrpts {
        return Err(perr(0, format!("{} degeneracies for {nrpts} R-vectors", degen.len())));
    }
    let mut blocks: BTreeMap<i64, CMat> = BTreeMap::new();
    let mut r_index: BTreeMap<[i64; 3], usize> = BTreeMap::new();
    for (ln, l) in lines {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 7 {
            return Err(perr(ln + 1, format!("expected 7 columns, found {}", toks.len())));
        }
        let int = |k: usize| toks[k].parse::<i64>().map_err(|_| perr(ln + 1, format!("bad integer {:?}", toks[k])));
        let float = |k: usize| toks[k].parse::<f64>().map_err(|_| perr(ln + 1, format!("bad number {:?}", toks[k])));
        let r = [int(0)?, int(1)?, int(2)?];
        let (i, j) = (int(3)?, int(4)?);
        if i < 1 || j < 1 || i as usize > n || j as usize > n {
            return Err(perr(ln + 1, format!("orbital index ({i}, {j}) outside 1..={n}")));
        }
        let next = r_index.len();
        let ri = *r_index.entry(r).or_insert(next);
        let d = *degen.get(ri).ok_or_else(|| perr(ln + 1, format!("more than {nrpts} R-vectors")))?;
        let v = c64(float(5)?, float(6)?) / d;
        if r[1] != 0 || r[2] != 0 {
            if v.norm() != 0.0 {
                return Err(perr(ln + 1, format!("transverse coupling R = {r:?}; only wires along the first lattice vector are supported")));
            }
            continue;
        }
        blocks.entry(r[0]).or_insert_with(|| zeros(n, n))[(i as usize - 1, j as usize - 1)] = v;
    }
    let range = blocks.keys().map(|k| k.unsigned_abs() as usize).max().unwrap_or(0);
    let mut puc_h = Vec::with_capacity(range + 1);
    for k in 0..=range as i64 {
        let h = blocks.get(&k).cloned().unwrap_or_else(|| zeros(n, n));
        if let Some(hm) = blocks.get(&-k) {
            let defect = (hm - adj(&h)).norm();
            if defect > 1e-6 * h.norm().max(1.0) {
                return Err(perr(0, format!("H(-R) differs from H(R)^H by {defect:.3e} at R = {k}")));
            }
        }
        puc_h.push(h);
    }
    while puc_h.len() > 1 && puc_h.last().is_some_and(|b| b.norm() == 0.0) {
        puc_h.pop();
    }
    let positions = match &opts.positions {
        Some(p) => p.clone(),
        None => (0..n).map(|a| [0.0, a as f64, 0.0]).collect(),
    };
    if positions.len() != n {
        return Err(Error::InvalidInput(format!("{} positions for {n} Wannier orbitals", positions.len())));
    }
    let puc_v = screened_interaction(&positions, opts.cell_length, opts.r_cut, opts.coulomb, opts.screening_length, opts.n_u_w);
    let spec = DeviceSpec {
        n_orb_puc: n,
        n_u_g: opts.n_u_g,
        n_u_w: opts.n_u_w,
        n_b: opts.n_b,
        puc_h,
        puc_v,
        positions,
        cell_length: opts.cell_length,
        r_cut: opts.r_cut,
    };
    spec.validate(HERMITICITY_TOL)?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::toy::{toy_device, Preset, ToyParams};

    const CHAIN: &str = "n_orb = 1\nn_u_g = 1\nn_u_w = 1\nn_b = 4\ncell_length = 1.0\nr_cut = 0.5\npositions = [[0.0, 0.0, 0.0]]\n\n[[hamiltonian]]\nblock = [1, 1]\nvalues = [[0.0, 0.0]]\n\n[[hamiltonian]]\nblock = [1, 2]\nvalues = [[-1.0, 0.0]]\n\n[[coulomb]]\nblock = [1, 1]\nvalues = [[0.5, 0.0]]\n";

    #[test]
    fn minimal_chain_file() {
        let d = parse_device(CHAIN, "chain.toml").unwrap();
        let s = DeviceSummary::of(&d).unwrap();
        assert_eq!((s.n_bs_g, s.n_u_g, s.n_b_g), (1, 1, 4));
        assert_eq!(d.puc_h[1][(0, 0)], c64(-1.0, 0.0));
    }

    #[test]
    fn round_trip_is_exact() {
        let p = ToyParams { disorder: 0.3, ..Default::default() };
        let d = toy_device(&p).unwrap();
        let back = parse_device(&device_to_string(&d), "x").unwrap();
        assert_eq!(back.puc_h, d.puc_h);
        assert_eq!(back.puc_v, d.puc_v);
        assert_eq!(back.positions, d.positions);
        assert_eq!(device_to_string(&back), device_to_string(&d));
    }

    #[test]
    fn nw1_descriptor_reports_its_grouping() {
        let d = toy_device(&Preset::Nw1.params()).unwrap();
        let back = parse_device(&device_to_string(&d), "nw1.toml").unwrap();
        let s = DeviceSummary::of(&back).unwrap();
        assert_eq!((s.n_orb_puc, s.n_u_g, s.n_bs_g, s.n_bs_w), (104, 4, 416, 832));
    }

    #[test]
    fn corrupted_files_give_line_diagnostics() {
        let bad = CHAIN.replace("values = [[-1.0, 0.0]]", "values = [[-1.0, 0.0], [1.0, 0.0]]");
        match parse_device(&bad, "bad.toml") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 15),
            other => panic!("{other:?}"),
        }
        let bad = CHAIN.replace("n_b = 4", "n_b = four");
        match parse_device(&bad, "bad.toml") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_device("n_orb = 1\n[[", "x"), Err(Error::Parse { .. })));
    }

    #[test]
    fn non_hermitian_onsite_is_rejected() {
        let bad = CHAIN.replace("block = [1, 1]\nvalues = [[0.0, 0.0]]", "block = [1, 1]\nvalues = [[0.0, 1e-6]]");
        assert!(matches!(parse_device(&bad, "x"), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn hr_import_divides_by_degeneracy() {
        let hr = "written by hand\n1\n3\n 1 2 1\n-1 0 0 1 1 -1.0 0.0\n 0 0 0 1 1 0.2 0.0\n 1 0 0 1 1 -1.0 0.0\n";
        let d = import_hr(hr, "x_hr.dat", &HrImport::default()).unwrap();
        assert_eq!(d.puc_h.len(), 2);
        assert_eq!(d.puc_h[0][(0, 0)], c64(0.1, 0.0));
        assert_eq!(d.puc_h[1][(0, 0)], c64(-1.0, 0.0));
        let bad = hr.replace(" 1 0 0 1 1 -1.0 0.0", " 1 0 0 1 1 -2.0 0.0");
        assert!(import_hr(&bad, "x_hr.dat", &HrImport::default()).is_err());
        let bad = hr.replace(" 1 0 0 1 1", " 1 1 0 1 1");
        assert!(matches!(import_hr(&bad, "x_hr.dat", &HrImport::default()), Err(Error::Parse { line: 7, .. })));
    }
}
