//! Energy convolutions by FFT against the direct double sum.

use std::time::Instant;

use gwtransport::linalg::C64;
use gwtransport::scba::convolve::{convolve_direct, convolve_energy, Mode, Spectra};

fn main() -> gwtransport::Result<()> {
    for n_e in [64, 256, 1024] {
        let mut a = Spectra::zeros(4, n_e);
        let mut b = Spectra::zeros(4, n_e);
        for k in 0..4 {
            for (i, v) in a.entry_mut(k).iter_mut().enumerate() {
                let x = i as f64 / n_e as f64;
                *v = C64::new((-(x - 0.4).powi(2) * 40.0).exp(), 0.1 * k as f64);
            }
            for (i, v) in b.entry_mut(k).iter_mut().enumerate() {
                *v = C64::new(0.0, (i as f64 * 0.01).sin());
            }
        }
        let t = Instant::now();
        let fft = convolve_energy(&a, &b, Mode::Correlation, C64::new(0.0, 1.0), 0.01)?;
        let t_fft = t.elapsed();
        let t = Instant::now();
        let direct = convolve_direct(&a, &b, Mode::Correlation, C64::new(0.0, 1.0), 0.01)?;
        let t_direct = t.elapsed();
        println!("N_E = {n_e:>5}: deviation {:.1e}, FFT {t_fft:?}, direct {t_direct:?}", fft.rel_diff(&direct));
    }
    Ok(())
}
