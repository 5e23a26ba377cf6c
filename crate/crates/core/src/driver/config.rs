//! Run configuration (TOML).
//!
//! ```toml
//! device = "device.toml"   # relative to this file; omit to use [toy]
//! output_dir = "out"
//! workers = 2
//! oracle_mode = false
//!
//! [toy]
//! n_b = 8
//!
//! [grid]
//! e_min = -4.0
//! e_max = 4.0
//! n_e = 128
//! eta = 1e-3
//!
//! [contacts]
//! mu_left = 0.2
//! mu_right = -0.2
//! kT = 0.1
//!
//! [scba]
//! max_iter = 50
//! tol = 1e-6
//! mixing = 0.3
//! reset_sigma = false
//!
//! [obc]
//! retarded_method = "beyn"      # beyn | sancho | fixed_point
//! beyn = { n_quad = 16, radius = 1.0, svd_tol = 1e-8 }
//! memoizer = { enabled = true, n_fpi_retarded = 20, n_fpi_lg = 10 }
//!
//! [dist]
//! p_s = 1
//! backend = "in_process"        # in_process | multi_process
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::device_file::{load_device, parse_toml};
use super::toy::{toy_device, ToyParams};
use crate::bt::device::DeviceSpec;
use crate::bt::EnergyGrid;
use crate::error::{Error, Result};
use crate::obc::{BeynParams, LyapunovMethod, RetardedMethod};
use crate::scba::run::{ContactConfig, ScbaOptions};
use crate::scba::selfenergy::Backend;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub e_min: f64,
    pub e_max: f64,
    pub n_e: usize,
    pub eta: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { e_min: -4.0, e_max: 4.0, n_e: 128, eta: 1e-3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScbaConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub mixing: f64,
    pub reset_sigma: bool,
    /// `false` skips the self-consistency and solves the ballistic device.
    pub interacting: bool,
    pub backend: Backend,
}

impl Default for ScbaConfig {
    fn default() -> Self {
        let o = ScbaOptions::default();
        ScbaConfig {
            max_iter: o.max_iter,
            tol: o.tol,
            mixing: o.mixing,
            reset_sigma: o.reset_sigma,
            interacting: o.interacting,
            backend: o.backend,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoizerConfig {
    pub enabled: bool,
    pub n_fpi_retarded: usize,
    pub n_fpi_lg: usize,
}

impl Default for MemoizerConfig {
    fn default() -> Self {
        MemoizerConfig { enabled: true, n_fpi_retarded: 20, n_fpi_lg: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObcConfig {
    pub retarded_method: RetardedMethod,
    pub beyn: BeynParams,
    pub lyapunov: LyapunovMethod,
    pub memoizer: MemoizerConfig,
}

impl Default for ObcConfig {
    fn default() -> Self {
        ObcConfig {
            retarded_method: RetardedMethod::Beyn,
            beyn: BeynParams::default(),
            lyapunov: LyapunovMethod::Doubling,
            memoizer: MemoizerConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommBackend {
    /// Energy workers are threads of one process.
    InProcess,
    /// Energy workers are processes joined over local TCP sockets.
    MultiProcess,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistConfig {
    /// Spatial partitions per selected solve.
    pub p_s: usize,
    pub backend: CommBackend,
}

impl Default for DistConfig {
    fn default() -> Self {
        DistConfig { p_s: 1, backend: CommBackend::InProcess }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub device: Option<PathBuf>,
    pub toy: ToyParams,
    pub grid: GridConfig,
    pub contacts: ContactConfig,
    pub scba: ScbaConfig,
    pub obc: ObcConfig,
    pub dist: DistConfig,
    /// Energy workers.
    pub workers: usize,
    pub output_dir: PathBuf,
    pub oracle_mode: bool,
}

impl RunConfig {
    /// Parses a configuration; a relative `device` path is taken relative to
    /// `base` (normally the directory of the configuration file).
    pub fn from_str_at(text: &str, label: &str, base: &Path) -> Result<Self> {
        let mut c: RunConfig = parse_toml(text, label)?;
        if let Some(d) = &c.device {
            if d.is_relative() {
                c.device = Some(base.join(d));
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::error::read_text(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_str_at(&text, &path.display().to_string(), base)
    }

    pub fn validate(&self) -> Result<()> {
        self.energy_grid()?;
        self.options().validate()?;
        let b = &self.obc.beyn;
        if !(b.svd_tol > 0.0 && b.residual_tol > 0.0 && b.radius > 0.0) || b.n_quad == 0 {
            return Err(Error::InvalidInput("beyn: n_quad, radius and tolerances must be positive".into()));
        }
        if !(self.contacts.kt > 0.0) {
            return Err(Error::InvalidInput(format!("kT must be positive, got {}", self.contacts.kt)));
        }
        if self.dist.p_s == 0 {
            return Err(Error::InvalidInput("dist.p_s must be at least 1".into()));
        }
        Ok(())
    }

    /// Energy workers, at least one.
    pub fn worker_count(&self) -> usize {
        self.workers.max(1)
    }

    pub fn energy_grid(&self) -> Result<EnergyGrid> {
        let g = &self.grid;
        EnergyGrid::new(g.e_min, g.e_max, g.n_e, g.eta)
    }

    pub fn options(&self) -> ScbaOptions {
        ScbaOptions {
            max_iter: self.scba.max_iter,
            tol: self.scba.tol,
            mixing: self.scba.mixing,
            reset_sigma: self.scba.reset_sigma,
            interacting: self.scba.interacting,
            retarded_method: self.obc.retarded_method,
            beyn: self.obc.beyn.clone(),
            lyapunov: self.obc.lyapunov,
            memoizer: self.obc.memoizer.enabled,
            n_fpi_retarded: self.obc.memoizer.n_fpi_retarded,
            n_fpi_lg: self.obc.memoizer.n_fpi_lg,
            backend: self.scba.backend,
            oracle: self.oracle_mode,
        }
    }

    /// The device file, or the toy device when none is given.
    pub fn device_spec(&self) -> Result<DeviceSpec> {
        match &self.device {
            Some(p) => load_device(p),
            None => toy_device(&self.toy),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_toy_default() {
        let c = RunConfig::from_str_at("", "x", Path::new(".")).unwrap();
        assert_eq!(c.options(), ScbaOptions::default());
        assert_eq!(c.toy, ToyParams::default());
        assert_eq!(c.worker_count(), 1);
    }

    #[test]
    fn sections_map_onto_options() {
        let text = r#"
device = "dev.toml"
workers = 3
oracle_mode = true
[grid]
n_e = 64
[contacts]
kT = 0.1
[scba]
max_iter = 7
mixing = 1.0
[obc]
retarded_method = "sancho"
beyn = { n_quad = 32 }
memoizer = { enabled = false, n_fpi_lg = 4 }
[dist]
p_s = 2
backend = "multi_process"
"#;
        let c = RunConfig::from_str_at(text, "x", Path::new("/data")).unwrap();
        assert_eq!(c.device.as_deref(), Some(Path::new("/data/dev.toml")));
        let o = c.options();
        assert_eq!((o.max_iter, o.mixing, o.memoizer, o.n_fpi_lg, o.oracle), (7, 1.0, false, 4, true));
        assert_eq!(o.retarded_method, RetardedMethod::Sancho);
        assert_eq!(o.beyn.n_quad, 32);
        assert_eq!(c.contacts.kt, 0.1);
        assert_eq!((c.dist.p_s, c.dist.backend), (2, CommBackend::MultiProcess));
        assert_eq!(c.energy_grid().unwrap().n_e, 64);
    }

    #[test]
    fn invariants_are_enforced() {
        for bad in ["[scba]\ntol = -1.0", "[dist]\np_s = 0", "[grid]\nn_e = 1", "[contacts]\nkT = -1.0", "[obc.beyn]\nsvd_tol = 0.0"] {
            assert!(RunConfig::from_str_at(bad, "x", Path::new(".")).is_err(), "{bad}");
        }
        match RunConfig::from_str_at("workers = 1\n[scba]\nmax_itr = 3", "cfg.toml", Path::new(".")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
