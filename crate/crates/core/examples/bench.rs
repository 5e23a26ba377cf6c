//! Complexity slopes of the selected solve and the flop model of one SCBA
//! iteration.

use gwtransport::driver::bench::{rgf_vs_bs, rgf_vs_nb, FlopModel, ModelDims};

fn main() -> gwtransport::Result<()> {
    print!("{}", rgf_vs_nb(&[4, 8, 16], 16, 0.03)?);
    print!("{}", rgf_vs_bs(16, &[8, 16, 32], 0.03)?);
    let model = FlopModel::new(&ModelDims { n_e: 1000, n_b_g: 18, bs_g: 416, n_b_w: 9, bs_w: 832, bw_v: 3, n_quad: 16 });
    println!("model of one iteration at nanowire size:");
    for (name, f) in &model.categories {
        println!("  {name:<24} {:>10.3} Pflop", *f as f64 * 1e-15);
    }
    Ok(())
}
