//! Run configuration: one structured file fully determines a run.
//! Reference serialization is JSON; the config hash keys all artifacts.

use crate::ensemble::GridInit;
use crate::error::{Error, Result};
use crate::field::MagneticFieldSpec;
use crate::kernels::KernelSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KernelConfig {
    pub sign: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// `None` resolves to half the initial position-lattice spacing.
    #[serde(default)]
    pub softening: Option<f64>,
    #[serde(default = "one")]
    pub coupling: f64,
}

fn default_kappa() -> f64 {
    1.0
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VerifyParams {
    /// kernel integrability exponent driving the long-time 3D checks
    #[serde(default = "default_c")]
    pub c: f64,
    /// relative slack applied across the inequality checks
    #[serde(default = "default_slack")]
    pub slack: f64,
    /// transport exponent for twin runs
    #[serde(default = "two")]
    pub p: f64,
}

fn default_c() -> f64 {
    1.41
}

fn default_slack() -> f64 {
    crate::inequalities::DEFAULT_SLACK
}

fn two() -> f64 {
    2.0
}

impl Default for VerifyParams {
    fn default() -> Self {
        VerifyParams {
            c: default_c(),
            slack: default_slack(),
            p: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub kernel: KernelConfig,
    pub field: MagneticFieldSpec,
    pub initial: GridInit,
    pub dt: f64,
    pub horizon: f64,
    /// record one output frame every this many steps
    #[serde(default = "one_usize")]
    pub output_every: usize,
    pub moment_orders: Vec<u32>,
    /// finite density-norm orders; the sup norm is always recorded
    #[serde(default = "default_density_ps")]
    pub density_norm_orders: Vec<f64>,
    /// `None` resolves to twice the initial position-lattice spacing
    #[serde(default)]
    pub grid_h: Option<f64>,
    #[serde(default = "default_cell_cap")]
    pub grid_cell_cap: usize,
    #[serde(default)]
    pub seed: u64,
    /// fixed pairwise summation order (bit-reproducible runs)
    #[serde(default = "default_true")]
    pub deterministic: bool,
    /// write ensemble snapshots every this many frames
    #[serde(default)]
    pub snapshot_every: Option<usize>,
    #[serde(default)]
    pub verify: VerifyParams,
}

fn one_usize() -> usize {
    1
}

fn default_density_ps() -> Vec<f64> {
    vec![1.0, 2.0]
}

fn default_cell_cap() -> usize {
    crate::grid::DEFAULT_CELL_CAP
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config schema violation: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Semantic validation beyond the schema; returns warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::Config(format!("dim: must be 2 or 3, got {}", self.dim)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt: must be > 0, got {}", self.dt)));
        }
        if self.horizon < self.dt && self.horizon != 0.0 {
            return Err(Error::Config(format!(
                "horizon: must be 0 or >= dt, got {}",
                self.horizon
            )));
        }
        if self.output_every == 0 {
            return Err(Error::Config("output_every: must be >= 1".into()));
        }
        if self.kernel.sign != 1.0 && self.kernel.sign != -1.0 {
            return Err(Error::Config("kernel.sign: must be +1 or -1".into()));
        }
        if self.kernel.coupling < 0.0 || self.kernel.kappa < 0.0 {
            return Err(Error::Config(
                "kernel.coupling and kernel.kappa: must be >= 0".into(),
            ));
        }
        if let Some(s) = self.kernel.softening {
            if s < 0.0 {
                return Err(Error::Config("kernel.softening: must be >= 0".into()));
            }
        }
        if self.dim == 2 && self.kernel.kappa != 0.0 && self.kernel.kappa != default_kappa() {
            warnings.push("kernel.kappa: screening applies to the 3D kernel only; ignored in 2D".into());
        }
        if let Some(h) = self.grid_h {
            if !(h > 0.0) {
                return Err(Error::Config("grid_h: must be > 0".into()));
            }
        }
        if !(self.verify.c > 1.0) {
            return Err(Error::Config("verify.c: must exceed 1".into()));
        }
        Ok(warnings)
    }

    /// Initial position-lattice spacing of the tensor grid.
    pub fn x_lattice_spacing(&self) -> f64 {
        self.initial.x_lattice_spacing()
    }

    /// Resolved interaction kernel (softening default: half the initial
    /// position-lattice spacing).
    pub fn resolved_kernel(&self) -> KernelSpec {
        let softening = self
            .kernel
            .softening
            .unwrap_or_else(|| 0.5 * self.x_lattice_spacing());
        KernelSpec {
            dim: self.dim,
            sign: self.kernel.sign,
            kappa: if self.dim == 3 { self.kernel.kappa } else { 0.0 },
            softening,
            coupling: self.kernel.coupling,
        }
    }

    /// Resolved density-grid cell size (default: twice the initial
    /// position-lattice spacing).
    pub fn resolved_grid_h(&self) -> f64 {
        self.grid_h
            .unwrap_or_else(|| 2.0 * self.x_lattice_spacing())
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
