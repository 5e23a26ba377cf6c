//! Polarization and self-energy on entry-major spectra.
//!
//! For an upper entry `(i, j)`:
//!
//! ```text
//! P^≶_ij(w) = c_P dE sum_E' G^≶_ij(E') G^≷_ji(E' - w)
//! Σ^≶_ij(E) = c_Σ dE sum_w  G^≶_ij(E - w) W^≶_ij(w)
//! ```
//!
//! Bosonic quantities live on `w_k = k dE`, `k >= 0`; the negative
//! frequencies in the self-energy sum come from `W^≶_ij(-w) = W^≷_ji(w)`.
//! Transposed entries follow from anti-Hermiticity, `X_ji = -conj(X_ij)`.

use super::convolve::{
    convolve_direct, convolve_energy, mirror_retarded, retarded_from_lg, retarded_from_lg_bosonic, Mode, Spectra,
};
use super::{C_P, C_SIGMA};
use crate::error::Result;
use crate::linalg::C64;

/// Lesser, greater and retarded spectra of one quantity on an entry slice.
#[derive(Clone, Debug, PartialEq)]
pub struct LgSpectra {
    pub lesser: Spectra,
    pub greater: Spectra,
    /// `X^R_ij` for the upper entry.
    pub retarded: Spectra,
    /// `X^R_ji`, the transposed entry.
    pub retarded_lower: Spectra,
}

impl LgSpectra {
    pub fn zeros(n_entries: usize, n_e: usize) -> Self {
        let z = Spectra::zeros(n_entries, n_e);
        LgSpectra { lesser: z.clone(), greater: z.clone(), retarded: z.clone(), retarded_lower: z }
    }

    /// `max |X^> - X^< - (X^R_ij - conj(X^R_ji))| / max |X^> - X^<|`
    pub fn identity_defect(&self) -> f64 {
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for i in 0..self.lesser.data.len() {
            let d = self.greater.data[i] - self.lesser.data[i];
            let r = self.retarded.data[i] - self.retarded_lower.data[i].conj();
            num = num.max((d - r).norm());
            den = den.max(d.norm());
        }
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }
}

/// Which convolution backend to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Fft,
    Direct,
}

fn conv(backend: Backend, a: &Spectra, b: &Spectra, mode: Mode, pf: C64, de: f64) -> Result<Spectra> {
    match backend {
        Backend::Fft => convolve_energy(a, b, mode, pf, de),
        Backend::Direct => convolve_direct(a, b, mode, pf, de),
    }
}

/// `-conj` of every value: the transposed entry of an anti-Hermitian quantity.
fn transposed(x: &Spectra) -> Spectra {
    x.map(|z| -z.conj())
}

/// Projects diagonal entries onto the imaginary axis.
fn project(x: &mut Spectra, diag: &[bool]) {
    for (k, &d) in diag.iter().enumerate() {
        if d {
            for v in x.entry_mut(k) {
                v.re = 0.0;
            }
        }
    }
}

fn finish(mut lesser: Spectra, mut greater: Spectra, diag: &[bool], bosonic: bool) -> Result<LgSpectra> {
    project(&mut lesser, diag);
    project(&mut greater, diag);
    let retarded = if bosonic {
        retarded_from_lg_bosonic(&lesser, &greater)?
    } else {
        retarded_from_lg(&lesser, &greater)?
    };
    let mut retarded_lower = retarded.clone();
    for (i, v) in retarded_lower.data.iter_mut().enumerate() {
        *v = mirror_retarded(retarded.data[i], greater.data[i] - lesser.data[i]);
    }
    Ok(LgSpectra { lesser, greater, retarded, retarded_lower })
}

/// Polarization from the electron lesser/greater spectra.
pub fn compute_polarization(g_lesser: &Spectra, g_greater: &Spectra, diag: &[bool], de: f64, backend: Backend) -> Result<LgSpectra> {
    let pl = conv(backend, g_lesser, &transposed(g_greater), Mode::Correlation, C_P, de)?;
    let pg = conv(backend, g_greater, &transposed(g_lesser), Mode::Correlation, C_P, de)?;
    finish(pl, pg, diag, true)
}

/// `W^≶_ij(-w_m)` for `m >= 1` (zero at `m = 0`), from `W^≷_ij(w_m)`.
fn negative_frequencies(w_other: &Spectra) -> Spectra {
    let mut out = transposed(w_other);
    for k in 0..out.n_entries() {
        out.entry_mut(k)[0] = C64::new(0.0, 0.0);
    }
    out
}

/// Self-energy from the electron spectra and the screened interaction.
pub fn compute_sigma(
    g_lesser: &Spectra,
    g_greater: &Spectra,
    w_lesser: &Spectra,
    w_greater: &Spectra,
    diag: &[bool],
    de: f64,
    backend: Backend,
) -> Result<LgSpectra> {
    let mut sl = conv(backend, g_lesser, w_lesser, Mode::Convolution, C_SIGMA, de)?;
    let neg = conv(backend, g_lesser, &negative_frequencies(w_greater), Mode::Correlation, C_SIGMA, de)?;
    for (a, b) in sl.data.iter_mut().zip(&neg.data) {
        *a += b;
    }
    let mut sg = conv(backend, g_greater, w_greater, Mode::Convolution, C_SIGMA, de)?;
    let neg = conv(backend, g_greater, &negative_frequencies(w_lesser), Mode::Correlation, C_SIGMA, de)?;
    for (a, b) in sg.data.iter_mut().zip(&neg.data) {
        *a += b;
    }
    finish(sl, sg, diag, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_lg(seed: u64, diag: &[bool], n_e: usize) -> Spectra {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Spectra::zeros(diag.len(), n_e);
        for (k, &d) in diag.iter().enumerate() {
            for v in s.entry_mut(k) {
                *v = if d {
                    c64(0.0, rng.gen_range(-1.0..1.0))
                } else {
                    c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                };
            }
        }
        s
    }

    #[test]
    fn zero_inputs_give_zero() {
        let diag = [true, false];
        let z = Spectra::zeros(2, 8);
        let g = random_lg(1, &diag, 8);
        let p = compute_polarization(&z, &z, &diag, 0.1, Backend::Fft).unwrap();
        assert_eq!(p.lesser.max_abs() + p.greater.max_abs() + p.retarded.max_abs(), 0.0);
        let s = compute_sigma(&g, &g, &z, &z, &diag, 0.1, Backend::Fft).unwrap();
        assert_eq!(s.lesser.max_abs() + s.greater.max_abs(), 0.0);
    }

    /// Single orbital, spectra on two grid points.
    #[test]
    fn two_point_polarization_by_hand() {
        let de = 0.5;
        let gl = Spectra { n_e: 2, data: vec![c64(0.0, 1.0), c64(0.0, 2.0)] };
        let gg = Spectra { n_e: 2, data: vec![c64(0.0, -3.0), c64(0.0, -4.0)] };
        let p = compute_polarization(&gl, &gg, &[true], de, Backend::Direct).unwrap();
        // P^<(0) = c_P dE [G^<(0) G^>(0) + G^<(1) G^>(1)] with G^>_ji = -conj(G^>_ij) = G^>_ii here
        let cp = c64(0.0, -1.0 / (2.0 * PI));
        let p0 = cp * de * (c64(0.0, 1.0) * c64(0.0, -3.0) + c64(0.0, 2.0) * c64(0.0, -4.0));
        let p1 = cp * de * (c64(0.0, 2.0) * c64(0.0, -3.0));
        assert!((p.lesser.data[0] - p0).norm() < 1e-15);
        assert!((p.lesser.data[1] - p1).norm() < 1e-15);
    }

    #[test]
    fn fft_equals_direct_and_identities_hold() {
        let diag = [true, false, false, true, false];
        let n_e = 64;
        let gl = random_lg(1, &diag, n_e);
        let gg = random_lg(2, &diag, n_e);
        let pf = compute_polarization(&gl, &gg, &diag, 0.05, Backend::Fft).unwrap();
        let pd = compute_polarization(&gl, &gg, &diag, 0.05, Backend::Direct).unwrap();
        assert!(pf.lesser.rel_diff(&pd.lesser) < 1e-10);
        assert!(pf.greater.rel_diff(&pd.greater) < 1e-10);
        assert!(pf.identity_defect() < 1e-9);
        let sf = compute_sigma(&gl, &gg, &pf.lesser, &pf.greater, &diag, 0.05, Backend::Fft).unwrap();
        let sd = compute_sigma(&gl, &gg, &pd.lesser, &pd.greater, &diag, 0.05, Backend::Direct).unwrap();
        assert!(sf.lesser.rel_diff(&sd.lesser) < 1e-10);
        assert!(sf.greater.rel_diff(&sd.greater) < 1e-10);
        assert!(sf.identity_defect() < 1e-9);
    }

    #[test]
    fn delta_screened_interaction_gives_proportional_sigma() {
        let diag = [true, false];
        let n_e = 16;
        let de = 0.2;
        let gl = random_lg(5, &diag, n_e);
        let gg = random_lg(6, &diag, n_e);
        let mut wl = Spectra::zeros(2, n_e);
        let wg = Spectra::zeros(2, n_e);
        for k in 0..2 {
            wl.entry_mut(k)[0] = c64(0.0, 1.0 / de);
        }
        let s = compute_sigma(&gl, &gg, &wl, &wg, &diag, de, Backend::Direct).unwrap();
        for k in 0..2 {
            for e in 0..n_e {
                let expect = C_SIGMA * gl.entry(k)[e] * c64(0.0, 1.0);
                let mut expect = expect;
                if diag[k] {
                    expect.re = 0.0;
                }
                assert!((s.lesser.entry(k)[e] - expect).norm() < 1e-13);
            }
        }
    }
}
