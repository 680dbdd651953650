//! Experiment configuration: a single JSON file plus flag overrides.

use crate::error::{Result, WvgdError};
use crate::targets::{DatasetName, KernelExponent};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    MixtureCompare,
    LogregPelbo,
    GpPartition,
}

/// Optimizer settings shared by the experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Particle learning rate lambda_0.
    pub lambda: f64,
    /// Component learning rate epsilon.
    pub inner_lr: f64,
    /// Samples per particle per step, M.
    pub samples_per_step: usize,
    pub n_steps: usize,
    /// Learning-rate decay timescale; defaults to n_steps / 2.
    pub tau: Option<f64>,
    /// Steps between cell-mass refreshes.
    pub weight_refresh_every: usize,
    /// Samples per cell per refresh.
    pub weight_samples: usize,
    /// Samples per cell for the final weight estimate used in scoring.
    pub final_weight_samples: usize,
    /// Extra component-only fitting steps after the particles settle.
    pub polish_steps: usize,
    /// Samples per cell for PELBO evaluation.
    pub pelbo_samples: usize,
    /// SVGD learning rate.
    pub svgd_lr: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lambda: 0.25,
            inner_lr: 0.05,
            samples_per_step: 128,
            n_steps: 3000,
            tau: None,
            weight_refresh_every: 25,
            weight_samples: 512,
            final_weight_samples: 4096,
            polish_steps: 300,
            pelbo_samples: 2048,
            svgd_lr: 0.3,
        }
    }
}

impl OptimizerConfig {
    pub fn effective_tau(&self) -> f64 {
        self.tau.unwrap_or(self.n_steps as f64 / 2.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub names: Vec<DatasetName>,
    /// Directory holding <name>.csv files. Falls back to the WVGD_DATA_DIR
    /// environment variable, then to the seeded synthetic stand-ins.
    pub path: Option<PathBuf>,
    pub subset_n: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            names: DatasetName::ALL.to_vec(),
            path: None,
            subset_n: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub exponent: KernelExponent,
    /// Synthetic series length.
    pub n_points: usize,
    pub n_particles: usize,
    /// Slice resolution per axis for the partition grid.
    pub grid_size: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            exponent: KernelExponent::Squared,
            n_points: 24,
            n_particles: 2,
            grid_size: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    /// Standard deviation of the component locations.
    pub location_std: f64,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self { location_std: 1.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seeds: Vec<u64>,
    pub particle_counts: Vec<usize>,
    pub svgd_particle_multiplier: usize,
    pub n_repetitions: usize,
    pub optimizer: OptimizerConfig,
    pub dataset: DatasetConfig,
    pub gp: GpConfig,
    pub mixture: MixtureConfig,
    pub output_dir: PathBuf,
    /// When set, per-trial trajectory CSVs are written next to the results.
    pub save_trajectories: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::MixtureCompare,
            seeds: vec![42],
            particle_counts: vec![3, 4, 5, 6, 7],
            svgd_particle_multiplier: 3,
            n_repetitions: 15,
            optimizer: OptimizerConfig::default(),
            dataset: DatasetConfig::default(),
            gp: GpConfig::default(),
            mixture: MixtureConfig::default(),
            output_dir: PathBuf::from("results"),
            save_trajectories: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| WvgdError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| WvgdError::Config(format!("invalid config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(WvgdError::Config("seeds must be nonempty".into()));
        }
        if self.particle_counts.is_empty() || self.particle_counts.iter().any(|n| *n < 1) {
            return Err(WvgdError::Config("particle counts must be >= 1".into()));
        }
        if self.n_repetitions < 1 || self.svgd_particle_multiplier < 1 {
            return Err(WvgdError::Config("counts must be >= 1".into()));
        }
        let o = &self.optimizer;
        if o.lambda <= 0.0 || o.inner_lr <= 0.0 || o.svgd_lr <= 0.0 {
            return Err(WvgdError::Config("learning rates must be positive".into()));
        }
        if o.samples_per_step < 1 || o.n_steps < 1 {
            return Err(WvgdError::Config("step counts must be >= 1".into()));
        }
        if o.weight_samples < 100 || o.final_weight_samples < 100 || o.pelbo_samples < 100 {
            return Err(WvgdError::Config("sample sizes must be >= 100".into()));
        }
        if self.dataset.subset_n < 2 {
            return Err(WvgdError::Config("subset_n must be >= 2".into()));
        }
        if self.gp.n_points < 20 || self.gp.n_particles < 1 || self.gp.grid_size < 2 {
            return Err(WvgdError::Config("invalid gp section".into()));
        }
        if self.mixture.location_std <= 0.0 {
            return Err(WvgdError::Config("location_std must be positive".into()));
        }
        Ok(())
    }

    /// Stable hash of the full configuration, used to stamp every output.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut hex = String::with_capacity(12);
        for byte in digest.iter().take(6) {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }

    /// Directory holding the dataset CSVs, if any was configured.
    pub fn data_dir(&self) -> Option<PathBuf> {
        if let Some(p) = &self.dataset.path {
            return Some(p.clone());
        }
        std::env::var_os("WVGD_DATA_DIR").map(PathBuf::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_hash_is_stable() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.hash(), c.hash());
        assert_eq!(c.hash().len(), 12);
    }

    #[test]
    fn hash_changes_with_content() {
        let a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        b.seeds = vec![7];
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"experiment":"mixture_compare","bogus":1}"#;
        let parsed: std::result::Result<ExperimentConfig, _> = serde_json::from_str(text);
        assert!(parsed.is_err());
    }

    #[test]
    fn partial_configs_fill_defaults() {
        let text = r#"{"experiment":"logreg_pelbo","n_repetitions":5}"#;
        let parsed: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(parsed.n_repetitions, 5);
        assert_eq!(parsed.svgd_particle_multiplier, 3);
        assert_eq!(parsed.dataset.subset_n, 50);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = ExperimentConfig::default();
        c.particle_counts = vec![];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.optimizer.lambda = -1.0;
        assert!(c.validate().is_err());
    }
}
