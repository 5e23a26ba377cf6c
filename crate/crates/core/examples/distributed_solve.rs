//! The same selected solve split over spatial partitions.

use gwtransport::driver::bench::random_bt_system;
use gwtransport::driver::oracle::solution_deviation;
use gwtransport::driver::solver::distributed_solve;
use gwtransport::flops;
use gwtransport::rgf::rgf_solve;

fn main() -> gwtransport::Result<()> {
    let (m, bl, bg) = random_bt_system(7, 32, 8)?;
    let (seq, seq_flops) = flops::measure(|| rgf_solve(&m, Some(&bl), Some(&bg)));
    let seq = seq?;
    println!("sequential: {seq_flops} flop");
    for p_s in [1, 2, 4, 8] {
        let (d, fl) = flops::measure(|| distributed_solve(&m, Some(&bl), Some(&bg), p_s));
        let d = d?;
        println!(
            "p_s = {p_s}: {fl} flop ({:+.1}%), deviation {:.2e}",
            100.0 * (fl as f64 / seq_flops as f64 - 1.0),
            solution_deviation(&d, &seq)
        );
    }
    Ok(())
}
