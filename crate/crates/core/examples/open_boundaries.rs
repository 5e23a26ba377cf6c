//! Surface functions of a lead by three methods, and the lesser boundary
//! term from the Stein equation.

use gwtransport::linalg::{c64, rel_err, CMat};
use gwtransport::obc::testing::{chain_surface, random_lead};
use gwtransport::obc::{lead_lesser, obc_beyn, obc_fixed_point, obc_sancho_rubio, sigma_lg_obc, BeynParams, LyapunovMethod};

fn main() -> gwtransport::Result<()> {
    let c = random_lead(3, 4, 0.2, 0.05, 0.3);
    let beyn = obc_beyn(&c, &BeynParams::default())?;
    let (sancho, iters) = obc_sancho_rubio(&c, 1e-13, 200)?;
    let fp = obc_fixed_point(&c, &CMat::zeros(4, 4), 10_000, 1e-13)?;
    println!("Beyn: {} modes, residual {:.1e}", beyn.n_modes, beyn.residual);
    println!("Sancho-Rubio: {iters} iterations, |Beyn - SR| / |SR| = {:.1e}", rel_err(&beyn.x, &sancho));
    println!("fixed point: {} iterations, |FP - SR| / |SR| = {:.1e}", fp.iters, rel_err(&fp.x, &sancho));

    let z = c64(0.5, 1e-3);
    let exact = chain_surface(z, 1.0);
    let chain = gwtransport::obc::testing::chain(z, 1.0);
    let x = obc_beyn(&chain, &BeynParams::default())?.x[(0, 0)];
    println!("chain at E = 0.5: Beyn {x:.6}, closed form {exact:.6}");

    // lesser surface function for a lead in equilibrium with occupation 0.3
    let sigma = c.self_energy(&sancho);
    let (b0, _) = sigma_lg_obc(&sigma, 0.3);
    let (w, boundary) = lead_lesser(&c, &sancho, &b0, &b0, LyapunovMethod::Doubling, 1e-14)?;
    println!("lesser surface |w| = {:.3e}, boundary term |B| = {:.3e}", w.norm(), boundary.norm());
    Ok(())
}
