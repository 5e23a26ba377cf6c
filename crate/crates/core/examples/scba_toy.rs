//! Self-consistent GW run on the toy device with a small bias.

use gwtransport::driver::config::RunConfig;
use gwtransport::driver::output::format_summary;
use gwtransport::driver::run::execute;

fn main() -> gwtransport::Result<()> {
    let mut config = RunConfig::default();
    config.grid.n_e = 96;
    config.contacts.mu_left = 0.2;
    config.contacts.mu_right = -0.2;
    config.workers = 2;
    let result = execute(&config, None)?;
    print!("{}", format_summary(&result));
    for r in &result.summary.history {
        println!("iteration {:>3}: residual {:.3e}", r.iteration, r.residual);
    }
    println!("current per bond: {:?}", result.observables.current);
    Ok(())
}
