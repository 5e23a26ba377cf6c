//! Ballistic transport through a chain: transmission and the Landauer
//! current against the current of a non-interacting run.

use gwtransport::bt::EnergyGrid;
use gwtransport::driver::run::{run_threads, Operators};
use gwtransport::driver::toy::{toy_device, Preset};
use gwtransport::scba::observables::{caroli_transmission, landauer_current, observables};
use gwtransport::scba::run::{ContactConfig, ScbaOptions};

fn main() -> gwtransport::Result<()> {
    let ops = Operators::of(&toy_device(&Preset::Chain.params())?)?;
    for e in [-2.5, -1.0, 0.0, 1.0, 2.5] {
        println!("T({e:+.1}) = {:.6}", caroli_transmission(&ops.h, e, 1e-3)?);
    }
    let grid = EnergyGrid::new(-2.5, 2.5, 400, 1e-3)?;
    let opts = ScbaOptions { interacting: false, ..Default::default() };
    for bias in [0.1, 0.5, 1.0] {
        let contacts = ContactConfig { mu_left: bias / 2.0, mu_right: -bias / 2.0, kt: 0.025 };
        let (g, _, _) = run_threads(ops.problem(&grid, &contacts), &opts, 1, 1)?;
        let i = observables(&ops.h, &grid, 0, &g)?.mean_current();
        let reference = landauer_current(&ops.h, &grid, contacts.mu_left, contacts.mu_right, contacts.kt)?;
        println!("bias {bias:.1} V: I = {i:.6e}, Landauer {reference:.6e}");
    }
    Ok(())
}
