//! Lesser/greater boundary self-energies of leads in equilibrium.

use crate::linalg::{adj, CMat, C64};

/// Default thermal energy (eV), room temperature.
pub const DEFAULT_KT: f64 = 0.02585;

/// Fermi-Dirac occupation `1 / (1 + exp((e - mu) / kT))`, evaluated without overflow.
pub fn fermi(e: f64, mu: f64, kt: f64) -> f64 {
    let x = (e - mu) / kt;
    if x > 0.0 {
        let t = (-x).exp();
        t / (1.0 + t)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

/// `(Σ^<, Σ^>)` from the retarded boundary self-energy and the lead occupation `f`:
/// `Σ^< = -f (Σ^R - Σ^R^H)`, `Σ^> = (1 - f)(Σ^R - Σ^R^H)`.
pub fn sigma_lg_obc(sigma_r: &CMat, f: f64) -> (CMat, CMat) {
    let d = sigma_r - adj(sigma_r);
    (&d * C64::new(-f, 0.0), d * C64::new(1.0 - f, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_cmat;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn occupation_limits() {
        assert_eq!(fermi(-10.0, 0.0, DEFAULT_KT), 1.0);
        assert!(fermi(10.0, 0.0, DEFAULT_KT) < 1e-100);
        assert_eq!(fermi(0.3, 0.3, 0.01), 0.5);
        assert!(fermi(1e6, 0.0, 1e-3).is_finite());
    }

    #[test]
    fn full_and_empty_leads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = random_cmat(&mut rng, 3, 3);
        let (_, g) = sigma_lg_obc(&s, 1.0);
        assert_eq!(g.norm(), 0.0);
        let (l, _) = sigma_lg_obc(&s, 0.0);
        assert_eq!(l.norm(), 0.0);
    }

    #[test]
    fn spectral_identity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let s = random_cmat(&mut rng, 4, 4);
            let (l, g) = sigma_lg_obc(&s, 0.37);
            let d = &s - s.adjoint();
            assert!((&g - &l - &d).norm() <= 1e-15 * d.norm());
            assert!((&l + l.adjoint()).norm() == 0.0);
            assert!((&g + g.adjoint()).norm() == 0.0);
        }
    }
}
