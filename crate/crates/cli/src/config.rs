//! Versioned TOML pipeline configuration.
//!
//! Every section is optional and falls back to the library defaults. The
//! top-level `seed` is the only seed a user sets: component seeds are
//! derived from it by [`PipelineConfig::resolve_seeds`], overwriting any
//! `seed` field inside the sections. Optimizer run seeds are the explicit
//! list `optimize.seeds`.

use std::path::{Path, PathBuf};

use pec_core::classifier::ClassifierConfig;
use pec_core::converter::ParameterBounds;
use pec_core::dataset::SplitSpec;
use pec_core::fitness::FitnessConfig;
use pec_core::optim::compare::ComparisonConfig;
use pec_core::regress::RegressorConfig;
use pec_core::rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub seed: u64,
    /// Output directory for every artifact.
    pub out: PathBuf,
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub classifier: ClassifierConfig,
    pub regressor: RegressorConfig,
    pub evaluation: EvaluationConfig,
    pub fitness: FitnessConfig,
    pub optimize: ComparisonConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            seed: 2024,
            out: PathBuf::from("out"),
            dataset: DatasetConfig::default(),
            split: SplitConfig::default(),
            classifier: ClassifierConfig::default(),
            regressor: RegressorConfig::default(),
            evaluation: EvaluationConfig::default(),
            fitness: FitnessConfig::default(),
            optimize: ComparisonConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n: usize,
    pub bounds: ParameterBounds,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n: 30_000,
            bounds: ParameterBounds::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_fraction: f64,
    /// Folds of the classifier cross-validation.
    pub k: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let s = SplitSpec::default();
        SplitConfig {
            test_fraction: s.test_fraction,
            k: s.k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Central interval level for PICP, MPIW and the interval histograms.
    pub level: f64,
    pub calibration_grid: Vec<f64>,
    pub histogram_bins: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            level: 0.95,
            calibration_grid: (1..=19).map(|i| f64::from(i) * 0.05).chain([0.99]).collect(),
            histogram_bins: 20,
        }
    }
}

/// Keys of the derived component seeds.
mod seed_key {
    pub const SPLIT: u64 = 1;
    pub const CLASSIFIER: u64 = 2;
    pub const REGRESSOR: u64 = 3;
    pub const FITNESS: u64 = 4;
}

impl PipelineConfig {
    /// Reads a TOML file; fields left out take their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            test_fraction: self.split.test_fraction,
            k: self.split.k,
            seed: rng::derive(self.seed, seed_key::SPLIT),
        }
    }

    /// Overwrites every component seed with one derived from `seed`.
    pub fn resolve_seeds(&mut self) {
        self.classifier.seed = rng::derive(self.seed, seed_key::CLASSIFIER);
        let r = rng::derive(self.seed, seed_key::REGRESSOR);
        self.regressor.ngboost.seed = r;
        self.regressor.gpr.seed = r;
        self.regressor.mc_dropout.seed = r;
        self.fitness.seed = rng::derive(self.seed, seed_key::FITNESS);
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.n == 0 {
            return Err(CliError::Config("dataset.n must be at least 1".into()));
        }
        self.dataset.bounds.validate()?;
        self.split_spec().validate()?;
        self.classifier.validate()?;
        self.regressor.validate()?;
        self.fitness.validate()?;
        self.optimize.validate()?;
        let e = &self.evaluation;
        if !(e.level > 0.0 && e.level < 1.0) {
            return Err(CliError::Config("evaluation.level must lie in (0, 1)".into()));
        }
        if e.calibration_grid.is_empty()
            || e.calibration_grid.iter().any(|g| !(*g > 0.0 && *g < 1.0))
            || e.calibration_grid.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(CliError::Config(
                "evaluation.calibration_grid must be a non-empty, strictly increasing subset of (0, 1)".into(),
            ));
        }
        if e.histogram_bins == 0 {
            return Err(CliError::Config("evaluation.histogram_bins must be positive".into()));
        }
        Ok(())
    }
}

/// Artifact locations inside the output directory.
#[derive(Debug, Clone)]
pub struct Paths {
    pub out: PathBuf,
}

impl Paths {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Paths { out: out.into() }
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn dataset(&self) -> PathBuf {
        self.file("dataset.csv")
    }

    pub fn dataset_summary(&self) -> PathBuf {
        self.file("dataset_summary.json")
    }

    pub fn classifier(&self) -> PathBuf {
        self.file("classifier.json")
    }

    pub fn logistic(&self) -> PathBuf {
        self.file("logistic.json")
    }

    pub fn regressor(&self) -> PathBuf {
        self.file("regressor.json")
    }

    pub fn traces(&self) -> PathBuf {
        self.file("traces")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        assert_eq!(PipelineConfig::from_toml("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn rejects_other_versions_and_unknown_keys() {
        assert!(PipelineConfig::from_toml("version = 2").is_err());
        assert!(PipelineConfig::from_toml("sed = 1").is_err());
    }

    #[test]
    fn zero_rows_fail_validation() {
        let cfg = PipelineConfig::from_toml("[dataset]\nn = 0").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn seeds_follow_the_master_seed() {
        let mut a = PipelineConfig::default();
        let mut b = PipelineConfig {
            seed: 7,
            ..PipelineConfig::default()
        };
        a.resolve_seeds();
        b.resolve_seeds();
        assert_ne!(a.classifier.seed, b.classifier.seed);
        assert_ne!(a.split_spec().seed, b.split_spec().seed);
    }
}
