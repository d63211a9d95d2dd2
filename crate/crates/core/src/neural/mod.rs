//! Convolutional stress modules, the delta-yield MLP, backpropagation and
//! ADADELTA training for the CNN-MLP and DEM-MLP models.

pub mod conv;
pub mod features;
pub mod io;
pub mod mlp;
pub mod model;
pub mod optim;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::dem::{CombineKind, DemParams};
use crate::{Error, Result};

pub use conv::{Activation, ConvStressModule, ConvTrace};
pub use features::{build_instance_tensor, padded_length, Feature, FeatureStats, InstanceTensor, ModuleKind};
pub use io::{load_bundle, save_bundle, BUNDLE_MAGIC};
pub use mlp::{Dense, Mlp, MlpShape, MlpTrace};
pub use model::{ModelBundle, ModelInputs, ModelKind, PreparedStress, StressFrontEnd, StressGradient};
pub use optim::Adadelta;
pub use train::{fit, init_bundle, split_instances, EpochMetrics, Split, TrainOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CnnConfig {
    pub height: usize,
    pub stride: usize,
    /// Padded season length; derived from the longest season when absent.
    pub d_max: Option<usize>,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            height: 15,
            stride: 12,
            d_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub combine: CombineKind,
    pub cnn: CnnConfig,
    /// Hidden layer widths; the kind's default when absent.
    pub hidden: Option<Vec<usize>>,
    pub input_scaling: InputScaling,
    pub dem: DemParams,
}

/// Standardization of expert stress inputs before the MLP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InputScaling {
    /// One shift and scale per stress block (heat, drought, combined), so
    /// periods keep their relative magnitudes.
    #[default]
    Block,
    /// Separate shift and scale for every input column.
    Column,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::CnnMlp,
            combine: CombineKind::Product,
            cnn: CnnConfig::default(),
            hidden: None,
            input_scaling: InputScaling::default(),
            dem: DemParams::default(),
        }
    }
}

impl ModelConfig {
    pub fn hidden_layers(&self) -> Vec<usize> {
        self.hidden.clone().unwrap_or_else(|| self.kind.default_hidden())
    }

    pub fn validate(&self) -> Result<()> {
        if self.cnn.height == 0 {
            return Err(Error::config("model.cnn.height", "must be positive"));
        }
        if self.cnn.stride == 0 {
            return Err(Error::config("model.cnn.stride", "must be positive"));
        }
        if let Some(d) = self.cnn.d_max {
            if d < self.cnn.height {
                return Err(Error::config("model.cnn.d_max", "must be at least the filter height"));
            }
        }
        if self.hidden_layers().contains(&0) {
            return Err(Error::config("model.hidden", "layer widths must be positive"));
        }
        self.dem.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub rho: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_fraction: f64,
    /// L2 penalty `weight_decay / 2 * |params|^2` added to the loss.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rho: 0.95,
            epsilon: 1e-6,
            learning_rate: 1.0,
            batch_size: 64,
            epochs: 200,
            train_fraction: 0.8,
            weight_decay: 0.0,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(Error::config("train.rho", "must lie in (0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("train.epsilon", "must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train.train_fraction", "must lie in (0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("train.weight_decay", "must be nonnegative"));
        }
        Ok(())
    }
}
