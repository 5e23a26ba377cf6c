//! Energy-major to entry-major transposition between workers, with the
//! compressed packing of lesser/greater quantities.

use std::thread;

use gwtransport::dist::InProcessComm;
use gwtransport::linalg::C64;
use gwtransport::scba::layout::{energy_to_entry, entry_to_energy, split, EntrySet, Packing, TransposeStats};

fn main() -> gwtransport::Result<()> {
    let (n_b, bs, n_e, workers) = (6, 3, 24, 3);
    let set = EntrySet::block_tridiagonal(n_b, bs);
    // value of entry k at energy e; diagonal entries are imaginary as for G^<
    let value = |k: usize, e: usize| {
        if set.is_diagonal(k) {
            C64::new(0.0, (k + e) as f64)
        } else {
            C64::new(k as f64, e as f64)
        }
    };
    let stats: Vec<gwtransport::Result<(bool, TransposeStats)>> = thread::scope(|s| {
        let handles: Vec<_> = InProcessComm::group(workers)
            .into_iter()
            .enumerate()
            .map(|(rank, comm)| {
                let set = &set;
                s.spawn(move || {
                    let local: Vec<Vec<C64>> = split(n_e, workers, rank).map(|e| (0..set.len()).map(|k| value(k, e)).collect()).collect();
                    let mut st = TransposeStats::default();
                    let spectra = energy_to_entry(&comm, set, n_e, &[&local], &[Packing::Lg], &mut st)?;
                    let back = entry_to_energy(&comm, set, n_e, &[&spectra[0]], &[Packing::Lg], &mut st)?;
                    Ok((back[0] == local, st))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut total = TransposeStats::default();
    for (rank, r) in stats.into_iter().enumerate() {
        let (same, st) = r?;
        println!("worker {rank}: round trip exact = {same}");
        total.merge(&st);
    }
    println!("{} of {} full-storage bytes sent ({:.1}%)", total.lg_bytes, total.lg_full_bytes, 100.0 * total.lg_fraction());
    Ok(())
}
