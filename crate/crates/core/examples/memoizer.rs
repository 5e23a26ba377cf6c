//! Reusing surface functions across a sequence of similar problems.

use gwtransport::bt::device::Subsystem;
use gwtransport::linalg::rel_err;
use gwtransport::obc::testing::random_lead;
use gwtransport::obc::{BeynParams, CacheKey, Side, Kind, RetardedMethod, RetardedSurface, SurfaceCache, SurfaceProblem};

fn main() -> gwtransport::Result<()> {
    let beyn = BeynParams::default();
    let mut cache = SurfaceCache::new(2, 5, true);
    let key = CacheKey { subsystem: Subsystem::G, side: Side::Left, energy_index: 0, kind: Kind::Retarded };
    // the lead drifts by shrinking amounts, as it does in a converging SCBA
    for step in 0..8 {
        let c = random_lead(1, 4, 0.2 + 1e-6 * (1.0 - 0.5f64.powi(step)), 0.05, 0.3);
        let problem = RetardedSurface { contact: &c, method: RetardedMethod::Beyn, beyn: &beyn };
        let x = cache.memoized(key, 1e-6, &problem)?;
        let exact = problem.direct()?;
        println!("step {step}: deviation from a direct solve {:.1e}", rel_err(&x, &exact));
    }
    let s = cache.stats;
    println!("{} direct, {} memoized, {} fallbacks", s.direct_calls, s.memoized_calls, s.fallbacks);
    Ok(())
}
