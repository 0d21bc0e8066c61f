//! Flat JSON run configuration with paper-faithful defaults.

use serde::{Deserialize, Serialize};

use crate::client::{AdapterMode, LocalOptimizer};
use crate::error::{Error, Result};
use crate::server::{ClassFilter, SampleMode};

/// Where the feature data comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic,
    File,
}

/// Which rebalancing variant runs at the end of each round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RebalanceMode {
    None,
    OldOnly,
    CurrentOnly,
    Both,
}

impl RebalanceMode {
    pub fn class_filter(self) -> Option<ClassFilter> {
        match self {
            RebalanceMode::None => None,
            RebalanceMode::OldOnly => Some(ClassFilter::OldOnly),
            RebalanceMode::CurrentOnly => Some(ClassFilter::CurrentOnly),
            RebalanceMode::Both => Some(ClassFilter::All),
        }
    }
}

/// Local optimizer family; rates live in separate flat fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // Data.
    pub source: DataSource,
    #[serde(default)]
    pub train_file: Option<String>,
    #[serde(default)]
    pub test_file: Option<String>,
    pub classes: usize,
    pub dim: usize,
    #[serde(default = "defaults::samples_per_class")]
    pub samples_per_class: usize,
    #[serde(default = "defaults::mean_scale")]
    pub mean_scale: f64,
    #[serde(default = "defaults::feature_noise")]
    pub feature_noise: f64,

    // Protocol shape.
    pub tasks: usize,
    pub clients: usize,
    pub beta: f64,
    #[serde(default = "defaults::min_samples_per_client")]
    pub min_samples_per_client: usize,
    #[serde(default = "defaults::partition_retries")]
    pub partition_retries: usize,
    #[serde(default = "defaults::rounds_per_task")]
    pub rounds_per_task: usize,
    #[serde(default = "defaults::participation_rate")]
    pub participation_rate: f64,

    // Local training.
    #[serde(default = "defaults::local_epochs")]
    pub local_epochs: usize,
    #[serde(default = "defaults::local_batch")]
    pub local_batch: usize,
    #[serde(default = "defaults::local_optimizer")]
    pub local_optimizer: OptimizerKind,
    #[serde(default = "defaults::local_lr")]
    pub local_lr: f64,
    #[serde(default = "defaults::local_momentum")]
    pub local_momentum: f64,
    #[serde(default = "defaults::adam_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "defaults::adam_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "defaults::adapter")]
    pub adapter: AdapterMode,
    #[serde(default = "defaults::masked_local_loss")]
    pub masked_local_loss: bool,

    // Rebalancing.
    #[serde(default = "defaults::rebalance")]
    pub rebalance: RebalanceMode,
    #[serde(default = "defaults::rebalance_per_class")]
    pub rebalance_per_class: usize,
    #[serde(default = "defaults::rebalance_cov_scale")]
    pub rebalance_cov_scale: f64,
    #[serde(default = "defaults::rebalance_epochs")]
    pub rebalance_epochs: usize,
    #[serde(default = "defaults::rebalance_lr")]
    pub rebalance_lr: f64,
    #[serde(default = "defaults::rebalance_momentum")]
    pub rebalance_momentum: f64,
    #[serde(default = "defaults::rebalance_batch")]
    pub rebalance_batch: usize,
    #[serde(default = "defaults::rebalance_cosine")]
    pub rebalance_cosine: bool,
    #[serde(default = "defaults::rebalance_sample_mode")]
    pub rebalance_sample_mode: SampleMode,

    // Run identity.
    pub seed: u64,

    // Execution knob, deliberately excluded from the report echo so worker
    // count cannot influence report bytes.
    #[serde(default = "defaults::workers", skip_serializing)]
    pub workers: usize,
}

mod defaults {
    use super::*;

    pub fn samples_per_class() -> usize {
        100
    }
    pub fn mean_scale() -> f64 {
        10.0
    }
    pub fn feature_noise() -> f64 {
        1.0
    }
    pub fn min_samples_per_client() -> usize {
        1
    }
    pub fn partition_retries() -> usize {
        100
    }
    pub fn rounds_per_task() -> usize {
        5
    }
    pub fn participation_rate() -> f64 {
        1.0
    }
    pub fn local_epochs() -> usize {
        5
    }
    pub fn local_batch() -> usize {
        16
    }
    pub fn local_optimizer() -> OptimizerKind {
        OptimizerKind::Adam
    }
    pub fn local_lr() -> f64 {
        0.003
    }
    pub fn local_momentum() -> f64 {
        0.9
    }
    pub fn adam_beta1() -> f64 {
        0.9
    }
    pub fn adam_beta2() -> f64 {
        0.999
    }
    pub fn adapter() -> AdapterMode {
        AdapterMode::None
    }
    pub fn masked_local_loss() -> bool {
        true
    }
    pub fn rebalance() -> RebalanceMode {
        RebalanceMode::Both
    }
    pub fn rebalance_per_class() -> usize {
        256
    }
    pub fn rebalance_cov_scale() -> f64 {
        3.0
    }
    pub fn rebalance_epochs() -> usize {
        5
    }
    pub fn rebalance_lr() -> f64 {
        0.01
    }
    pub fn rebalance_momentum() -> f64 {
        0.9
    }
    pub fn rebalance_batch() -> usize {
        256
    }
    pub fn rebalance_cosine() -> bool {
        true
    }
    pub fn rebalance_sample_mode() -> SampleMode {
        SampleMode::Hierarchical
    }
    pub fn workers() -> usize {
        1
    }
}

impl RunConfig {
    /// Synthetic-benchmark config with paper defaults everywhere else.
    pub fn synthetic(
        classes: usize,
        dim: usize,
        tasks: usize,
        clients: usize,
        beta: f64,
        seed: u64,
    ) -> Self {
        RunConfig {
            source: DataSource::Synthetic,
            train_file: None,
            test_file: None,
            classes,
            dim,
            samples_per_class: defaults::samples_per_class(),
            mean_scale: defaults::mean_scale(),
            feature_noise: defaults::feature_noise(),
            tasks,
            clients,
            beta,
            min_samples_per_client: defaults::min_samples_per_client(),
            partition_retries: defaults::partition_retries(),
            rounds_per_task: defaults::rounds_per_task(),
            participation_rate: defaults::participation_rate(),
            local_epochs: defaults::local_epochs(),
            local_batch: defaults::local_batch(),
            local_optimizer: defaults::local_optimizer(),
            local_lr: defaults::local_lr(),
            local_momentum: defaults::local_momentum(),
            adam_beta1: defaults::adam_beta1(),
            adam_beta2: defaults::adam_beta2(),
            adapter: defaults::adapter(),
            masked_local_loss: defaults::masked_local_loss(),
            rebalance: defaults::rebalance(),
            rebalance_per_class: defaults::rebalance_per_class(),
            rebalance_cov_scale: defaults::rebalance_cov_scale(),
            rebalance_epochs: defaults::rebalance_epochs(),
            rebalance_lr: defaults::rebalance_lr(),
            rebalance_momentum: defaults::rebalance_momentum(),
            rebalance_batch: defaults::rebalance_batch(),
            rebalance_cosine: defaults::rebalance_cosine(),
            rebalance_sample_mode: defaults::rebalance_sample_mode(),
            seed,
            workers: defaults::workers(),
        }
    }

    pub fn local_optimizer_settings(&self) -> LocalOptimizer {
        match self.local_optimizer {
            OptimizerKind::Adam => LocalOptimizer::Adam {
                lr: self.local_lr,
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
            },
            OptimizerKind::Sgd => LocalOptimizer::Sgd {
                lr: self.local_lr,
                momentum: self.local_momentum,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: &str| Err(Error::Config(msg.into()));
        if self.classes < 2 {
            return err("classes must be >= 2");
        }
        if self.dim < 1 {
            return err("dim must be >= 1");
        }
        if self.tasks < 1 {
            return err("tasks must be >= 1");
        }
        if self.tasks > self.classes {
            return err("tasks must not exceed classes");
        }
        if self.clients < 1 {
            return err("clients must be >= 1");
        }
        if !(self.beta > 0.0) {
            return err("beta must be > 0");
        }
        if self.rounds_per_task < 1 {
            return err("rounds_per_task must be >= 1");
        }
        if self.local_epochs < 1 || self.local_batch < 1 {
            return err("local_epochs and local_batch must be >= 1");
        }
        if !(self.participation_rate > 0.0 && self.participation_rate <= 1.0) {
            return err("participation_rate must be in (0, 1]");
        }
        if self.rebalance_per_class < 1 || self.rebalance_epochs < 1 || self.rebalance_batch < 1 {
            return err("rebalance counts must be >= 1");
        }
        if !(self.rebalance_cov_scale > 0.0) {
            return err("rebalance_cov_scale must be > 0");
        }
        if !(self.local_lr >= 0.0 && self.rebalance_lr >= 0.0) {
            return err("learning rates must be >= 0");
        }
        if self.workers < 1 {
            return err("workers must be >= 1");
        }
        match self.source {
            DataSource::Synthetic => {
                if self.samples_per_class < 1 {
                    return err("samples_per_class must be >= 1");
                }
                if !(self.feature_noise > 0.0) {
                    return err("feature_noise must be > 0");
                }
            }
            DataSource::File => {
                if self.train_file.is_none() || self.test_file.is_none() {
                    return err("file source requires train_file and test_file");
                }
            }
        }
        Ok(())
    }

    /// Parse a flat JSON config; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}
