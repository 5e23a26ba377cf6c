//! Uniform energy axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    pub e_min: f64,
    pub e_max: f64,
    pub n_e: usize,
    /// Broadening added to the lead energies.
    pub eta: f64,
}

impl EnergyGrid {
    pub fn new(e_min: f64, e_max: f64, n_e: usize, eta: f64) -> Result<Self> {
        let g = EnergyGrid { e_min, e_max, n_e, eta };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_e < 2 {
            return Err(Error::InvalidInput(format!("n_e = {} < 2", self.n_e)));
        }
        if !(self.e_max > self.e_min) || !self.e_min.is_finite() || !self.e_max.is_finite() {
            return Err(Error::InvalidInput(format!("energy window [{}, {}]", self.e_min, self.e_max)));
        }
        if !(self.eta > 0.0) {
            return Err(Error::InvalidInput(format!("eta = {} must be positive", self.eta)));
        }
        Ok(())
    }

    pub fn de(&self) -> f64 {
        (self.e_max - self.e_min) / (self.n_e - 1) as f64
    }

    pub fn energy(&self, k: usize) -> f64 {
        self.e_min + k as f64 * self.de()
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..self.n_e).map(|k| self.energy(k)).collect()
    }

    /// Bosonic frequency `k dE` paired with energy index `k`.
    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.de()
    }
}
