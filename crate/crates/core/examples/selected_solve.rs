//! Selected blocks of the inverse of a block-tridiagonal system, compared
//! with a dense inverse.

use gwtransport::driver::bench::random_bt_system;
use gwtransport::flops;
use gwtransport::linalg::rel_err;
use gwtransport::rgf::rgf_solve;

fn main() -> gwtransport::Result<()> {
    let (n_b, bs) = (8, 6);
    let (m, b_lesser, b_greater) = random_bt_system(42, n_b, bs)?;
    let (sol, fl) = flops::measure(|| rgf_solve(&m, Some(&b_lesser), Some(&b_greater)));
    let sol = sol?;

    let g = m.to_dense().try_inverse().expect("invertible");
    let gl = &g * b_lesser.to_dense() * g.adjoint();
    let block = |d: &gwtransport::linalg::CMat, i: usize, j: usize| d.view((i * bs, j * bs), (bs, bs)).into_owned();
    let lesser = sol.lesser.as_ref().unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..n_b {
        worst = worst.max(rel_err(&sol.retarded.diag[i], &block(&g, i, i)));
        worst = worst.max(rel_err(&lesser.diag[i], &block(&gl, i, i)));
    }
    println!("N_B = {n_b}, N_BS = {bs}: {fl} flop");
    println!("largest relative deviation from the dense inverse: {worst:.2e}");
    Ok(())
}
