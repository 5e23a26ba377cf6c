//! Writing, reading and summarising a device file.

use gwtransport::bt::device::{assemble_from_puc, Operator, Subsystem};
use gwtransport::driver::device_file::{load_device, save_device, DeviceSummary};
use gwtransport::driver::toy::{toy_device, Preset};

fn main() -> gwtransport::Result<()> {
    let dir = std::env::temp_dir().join("gwtransport-device-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("toy.toml");
    let device = toy_device(&Preset::Toy.params())?;
    save_device(&device, &path)?;
    let loaded = load_device(&path)?;
    println!("{}", DeviceSummary::of(&loaded)?);
    let h = assemble_from_puc(&loaded, Operator::Hamiltonian, Subsystem::G)?;
    println!("H: {} blocks of {} x {}, bandwidth {}", h.n_blocks(), h.block_size(), h.block_size(), h.bandwidth());
    println!("written to {}", path.display());

    let nw = toy_device(&Preset::Nw1.params())?;
    println!("nanowire preset: {}", DeviceSummary::of(&nw)?);
    Ok(())
}
