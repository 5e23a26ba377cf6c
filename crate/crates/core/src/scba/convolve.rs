//! Energy convolutions and causal reconstruction on entry-major spectra.
//!
//! Every entry carries one spectrum over the `n_e` grid points. The sums are
//! linear (not circular): FFTs run on buffers zero-padded to `2 n_e`, and the
//! result is cut back to the grid window.

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::flops;
use crate::linalg::C64;

/// Spectra of `n_entries` entries on a grid of `n_e` points, entry-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectra {
    pub n_e: usize,
    pub data: Vec<C64>,
}

impl Spectra {
    pub fn zeros(n_entries: usize, n_e: usize) -> Self {
        Spectra { n_e, data: vec![C64::new(0.0, 0.0); n_entries * n_e] }
    }

    pub fn n_entries(&self) -> usize {
        if self.n_e == 0 {
            0
        } else {
            self.data.len() / self.n_e
        }
    }

    pub fn entry(&self, k: usize) -> &[C64] {
        &self.data[k * self.n_e..(k + 1) * self.n_e]
    }

    pub fn entry_mut(&mut self, k: usize) -> &mut [C64] {
        let n = self.n_e;
        &mut self.data[k * n..(k + 1) * n]
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Spectra {
        Spectra { n_e: self.n_e, data: self.data.iter().map(|&z| f(z)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |a - b| / max |b|`
    pub fn rel_diff(&self, other: &Spectra) -> f64 {
        let d = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let s = other.max_abs();
        if s == 0.0 {
            d
        } else {
            d / s
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// `y[k] = sum_m x1[k - m] x2[m]`
    Convolution,
    /// `y[k] = sum_j x1[j + k] x2[j]`
    Correlation,
}

fn check(x1: &Spectra, x2: &Spectra) -> Result<()> {
    if x1.n_e != x2.n_e || x1.data.len() != x2.data.len() {
        return Err(Error::Shape(format!(
            "spectra on {} x {} and {} x {} points",
            x1.n_entries(),
            x1.n_e,
            x2.n_entries(),
            x2.n_e
        )));
    }
    Ok(())
}

struct Plans {
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(len: usize) -> Self {
        let mut p = FftPlanner::new();
        Plans { len, fwd: p.plan_fft_forward(len), inv: p.plan_fft_inverse(len) }
    }

    fn scratch_len(&self) -> usize {
        self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())
    }

    fn count(&self, n_transforms: usize) {
        let l = self.len as f64;
        flops::add((n_transforms as f64 * 5.0 * l * l.log2().max(1.0)) as u64);
    }
}

/// Linear convolution or correlation of every entry, scaled by `prefactor * de`.
pub fn convolve_energy(x1: &Spectra, x2: &Spectra, mode: Mode, prefactor: C64, de: f64) -> Result<Spectra> {
    check(x1, x2)?;
    let n = x1.n_e;
    let plans = Plans::new(2 * n);
    let scale = prefactor * de / (2 * n) as f64;
    let mut out = Spectra::zeros(x1.n_entries(), n);
    let zero = C64::new(0.0, 0.0);
    let mut a = vec![zero; 2 * n];
    let mut b = vec![zero; 2 * n];
    let mut scratch = vec![zero; plans.scratch_len()];
    for (k, y) in out.data.chunks_mut(n).enumerate() {
        a[..n].copy_from_slice(x1.entry(k));
        a[n..].fill(zero);
        match mode {
            Mode::Convolution => {
                b[..n].copy_from_slice(x2.entry(k));
                b[n..].fill(zero);
            }
            Mode::Correlation => {
                for (j, v) in x2.entry(k).iter().enumerate() {
                    b[n - 1 - j] = *v;
                }
                b[n..].fill(zero);
            }
        }
        plans.fwd.process_with_scratch(&mut a, &mut scratch);
        plans.fwd.process_with_scratch(&mut b, &mut scratch);
        for (u, v) in a.iter_mut().zip(&b) {
            *u *= v;
        }
        plans.inv.process_with_scratch(&mut a, &mut scratch);
        let off = match mode {
            Mode::Convolution => 0,
            Mode::Correlation => n - 1,
        };
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = a[i + off] * scale;
        }
    }
    plans.count(3 * x1.n_entries());
    Ok(out)
}

/// Direct `O(n_e^2)` evaluation of [`convolve_energy`].
pub fn convolve_direct(x1: &Spectra, x2: &Spectra, mode: Mode, prefactor: C64, de: f64) -> Result<Spectra> {
    check(x1, x2)?;
    let n = x1.n_e;
    let mut out = Spectra::zeros(x1.n_entries(), n);
    for e in 0..x1.n_entries() {
        let (a, b) = (x1.entry(e), x2.entry(e));
        let y = out.entry_mut(e);
        for k in 0..n {
            let mut s = C64::new(0.0, 0.0);
            match mode {
                Mode::Convolution => {
                    for m in 0..=k {
                        s += a[k - m] * b[m];
                    }
                }
                Mode::Correlation => {
                    for j in 0..n - k {
                        s += a[j + k] * b[j];
                    }
                }
            }
            y[k] = s * prefactor * de;
        }
    }
    flops::add((8 * n * n * x1.n_entries()) as u64);
    Ok(out)
}

/// Principal-value kernel for piecewise-linear spectra:
/// `P int hat(x' - m) / (0 - x') dx'` evaluated at integer offset `m`.
fn pv_kernel(m: i64) -> f64 {
    let g = |x: f64| if x == 0.0 { 0.0 } else { x * x.abs().ln() };
    let m = m as f64;
    g(m + 1.0) - 2.0 * g(m) + g(m - 1.0)
}

/// `h[k] = (i / 2 pi) sum_{m} d(m) K(k - m)` for the principal-value part of a
/// retarded function. `d_of(m)` supplies the spectral function at signed grid
/// offset `m` in `lo..=hi`.
fn hilbert(d: &[C64], lo: i64, n_out: usize, plans: &Plans) -> Vec<C64> {
    // d[t] sits at offset lo + t; outputs at k = 0..n_out.
    let len = plans.len;
    let nd = d.len() as i64;
    let mut a = vec![C64::new(0.0, 0.0); len];
    a[..d.len()].copy_from_slice(d);
    // y[k] = sum_t d[t] K(k - lo - t): kernel index runs over
    // (0 - lo - (nd - 1)) ..= (n_out - 1 - lo).
    let kmin = -lo - (nd - 1);
    let kmax = n_out as i64 - 1 - lo;
    let mut b = vec![C64::new(0.0, 0.0); len];
    for q in kmin..=kmax {
        let idx = (q - kmin) as usize;
        b[idx] = C64::new(pv_kernel(q), 0.0);
    }
    plans.fwd.process(&mut a);
    plans.fwd.process(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    plans.inv.process(&mut a);
    // conv[s] = sum_t d[t] b[s - t] with b[s - t] = K(s - t + kmin), so
    // y[k] = conv[k - lo - kmin].
    let pref = C64::new(0.0, 1.0 / (2.0 * std::f64::consts::PI)) / len as f64;
    (0..n_out).map(|k| a[(k as i64 - lo - kmin) as usize] * pref).collect()
}

/// Retarded spectra of fermionic quantities from their lesser and greater
/// spectra: `X^R = D / 2 + (i / 2 pi) P int D(E') / (E - E') dE'` with
/// `D = X^> - X^<`. For an entry `(i, j)` returns `X^R_ij`; the mirrored
/// entry is `D_ji / 2 + conj(h_ij)` (see [`mirror_retarded`]).
pub fn retarded_from_lg(lesser: &Spectra, greater: &Spectra) -> Result<Spectra> {
    check(lesser, greater)?;
    let n = lesser.n_e;
    let plans = Plans::new(2 * n);
    let mut out = Spectra::zeros(lesser.n_entries(), n);
    out.data.chunks_mut(n).enumerate().for_each(|(e, y)| {
        let d: Vec<C64> = greater.entry(e).iter().zip(lesser.entry(e)).map(|(g, l)| g - l).collect();
        let h = hilbert(&d, 0, n, &plans);
        for k in 0..n {
            y[k] = d[k] * 0.5 + h[k];
        }
    });
    plans.count(3 * lesser.n_entries());
    Ok(out)
}

/// Retarded spectra of bosonic quantities known on `w_k = k dE, k >= 0`.
///
/// Negative frequencies follow from `X^≶_ij(-w) = X^≷_ji(w)` and the
/// anti-Hermitian symmetry of `X^≶`, which give `D_ij(-w) = conj(D_ij(w))`.
pub fn retarded_from_lg_bosonic(lesser: &Spectra, greater: &Spectra) -> Result<Spectra> {
    check(lesser, greater)?;
    let n = lesser.n_e;
    let plans = Plans::new(4 * n);
    let mut out = Spectra::zeros(lesser.n_entries(), n);
    out.data.chunks_mut(n).enumerate().for_each(|(e, y)| {
        let d: Vec<C64> = greater.entry(e).iter().zip(lesser.entry(e)).map(|(g, l)| g - l).collect();
        let mut full = Vec::with_capacity(2 * n - 1);
        for m in (1..n).rev() {
            full.push(d[m].conj());
        }
        full.extend_from_slice(&d);
        let h = hilbert(&full, -(n as i64 - 1), n, &plans);
        for k in 0..n {
            y[k] = d[k] * 0.5 + h[k];
        }
    });
    plans.count(3 * lesser.n_entries());
    Ok(out)
}

/// The retarded value of the transposed entry `(j, i)` from `X^R_ij` and
/// `D_ij = X^>_ij - X^<_ij`: `X^R_ji = -conj(D_ij) / 2 + conj(X^R_ij - D_ij / 2)`.
pub fn mirror_retarded(xr: C64, d: C64) -> C64 {
    -d.conj() * 0.5 + (xr - d * 0.5).conj()
}
