//! Optimization: Adam with decoupled weight decay, stratified splits, the
//! epoch loop with early stopping, and loss ablations over a shared split.

mod adam;
mod split;
mod train;

#[cfg(test)]
mod tests;

use serde::{Deserialize, Serialize};

use crate::autodiff::GraphError;
use crate::loss::{LossConfig, LossError};
use crate::model::{ModelConfig, ModelError};

pub use adam::{adam_step, clip_global_norm, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use split::{stratified_split, Split};
pub use train::{ablation_run, AblationResult, EpochLog, TrainOutcome, Trainer};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("non-finite gradient for parameter {param} at step {step}")]
    NonFiniteGradient { param: String, step: u64 },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Decoupled: `θ ← θ − lr·wd·θ` before each Adam update.
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epochs without a `min_delta` gain in validation MCC before stopping.
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Feed the organism-group one-hot; off trains the group-agnostic mode.
    pub use_groups: bool,
    pub loss: LossConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-3,
            weight_decay: 1e-3,
            max_epochs: 300,
            batch_size: 32,
            patience: 25,
            min_delta: 1e-4,
            seed: 0,
            validation_fraction: 0.1,
            clip_norm: Some(5.0),
            use_groups: true,
            loss: LossConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.patience < 1 {
            return bad("patience must be at least 1");
        }
        if self.batch_size < 1 || self.max_epochs < 1 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return bad("clip_norm must be positive");
            }
        }
        self.loss.validate()?;
        self.model.validate().map_err(ModelError::from)?;
        Ok(())
    }
}
