//! JSON experiment configuration shared by the subcommands.
//!
//! Every field has a default, so an empty config file (or none at all) runs
//! the reference setup. CLI flags override individual fields after the
//! file is loaded.

use std::path::Path;

use edof_core::optics::{default_psi_grid, OpticsSpec, PhaseMaskSpec};
use edof_core::sensor::CfaPattern;
use edof_core::sparse::{SolverConfig, Theta, DEFAULT_MU};
use edof_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSection {
    pub mu: f64,
    pub iterations: usize,
    pub tolerance: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            mu: DEFAULT_MU,
            iterations: 100,
            tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub val_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            learning_rate: 3e-3,
            batch_size: 32,
            epochs: 12,
            val_fraction: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub optics: OpticsSpec<f64>,
    pub mask: PhaseMaskSpec<f64>,
    pub psi_grid: Vec<f64>,
    pub pattern: String,
    pub solver: SolverSection,
    pub train: TrainSection,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            optics: OpticsSpec::default(),
            mask: PhaseMaskSpec::default_ring(),
            psi_grid: default_psi_grid(),
            pattern: "RGGB".to_string(),
            solver: SolverSection::default(),
            train: TrainSection::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(ExperimentConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|_| Error::invalid(format!("missing config file {}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Format(format!("config {}: {e}", p.display())))
            }
        }
    }

    pub fn pattern(&self) -> Result<CfaPattern> {
        CfaPattern::from_name(&self.pattern)
    }

    pub fn solver_config(&self, lipschitz: f64) -> SolverConfig<f64> {
        SolverConfig {
            mu: self.solver.mu,
            lipschitz,
            theta: Theta::Derived,
            iterations: self.solver.iterations,
            tolerance: self.solver.tolerance,
        }
    }

    /// Canonical JSON for hashing into manifests.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

/// FNV-1a of the canonical config plus salient run inputs; identifies a
/// run in its manifest without any timestamps.
pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    format!("{hash:016x}")
}
