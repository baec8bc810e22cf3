//! Training protocol: optimizers, the two phase presets, early stopping on
//! validation accuracy and best-weight restoration.

mod early_stop;
mod fit;
mod optim;

pub use early_stop::{best_epoch, early_stopping, StopDecision};
pub use fit::{fit, score_records, train, ClassifierLearner, EpochRecord, EpochTrain, FitOutcome, Learner, TrainResult};
pub use optim::{adam_step, sgd_step, AdamState, Optimizer, OptimizerConfig, OptimizerKind};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DatasetError;
use crate::loader::LoadError;
use crate::metrics::MetricsError;
use crate::modelkit::{ModelError, WeightsOrigin};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    One,
    Two,
}

pub const PHASE_ONE_LR: f64 = 1e-3;
pub const PHASE_TWO_LR: f64 = PHASE_ONE_LR / 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub phase: Phase,
    pub learning_rate: f64,
    pub backbone_frozen: bool,
    /// Where backbone weights come from at the start of the phase.
    pub init: WeightsOrigin,
    /// Redraw the backbone from He-uniform before training.
    pub reinit_backbone: bool,
}

impl PhaseConfig {
    /// Frozen backbone, lr 1e-3.
    pub fn one() -> Self {
        Self {
            phase: Phase::One,
            learning_rate: PHASE_ONE_LR,
            backbone_frozen: true,
            init: WeightsOrigin::PretrainedImagenet,
            reinit_backbone: false,
        }
    }

    /// Unfrozen backbone, lr 1e-4. The head is freshly initialised; the
    /// backbone keeps its starting weights unless `reinit_backbone` is set.
    pub fn two() -> Self {
        Self {
            phase: Phase::Two,
            learning_rate: PHASE_TWO_LR,
            backbone_frozen: false,
            init: WeightsOrigin::PretrainedImagenet,
            reinit_backbone: false,
        }
    }

    pub fn for_phase(phase: Phase) -> Self {
        match phase {
            Phase::One => Self::one(),
            Phase::Two => Self::two(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.reinit_backbone && self.init == WeightsOrigin::PretrainedImagenet {
            return Err(TrainError::InvalidConfig(
                "reinit_backbone contradicts pretrained_imagenet initialisation".into(),
            ));
        }
        if self.phase == Phase::One && !self.backbone_frozen {
            return Err(TrainError::InvalidConfig("phase one trains with a frozen backbone".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub phase: PhaseConfig,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Phase preset with its learning rate applied to the optimizer.
    pub fn new(phase: Phase, kind: OptimizerKind, seed: u64) -> Self {
        let phase = PhaseConfig::for_phase(phase);
        let optimizer = OptimizerConfig::new(kind, phase.learning_rate);
        Self { phase, optimizer, batch_size: 16, max_epochs: 50, patience: 1, seed }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(TrainError::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if self.patience == 0 {
            return Err(TrainError::InvalidConfig("patience must be at least 1".into()));
        }
        self.phase.validate()?;
        self.optimizer.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_rates() {
        assert_eq!(PhaseConfig::two().learning_rate, PhaseConfig::one().learning_rate / 10.0);
        assert!(PhaseConfig::one().backbone_frozen);
        assert!(!PhaseConfig::two().backbone_frozen);
        let cfg = TrainConfig::new(Phase::Two, OptimizerKind::Sgd, 1);
        assert_eq!(cfg.optimizer.learning_rate, PHASE_TWO_LR);
        assert_eq!((cfg.batch_size, cfg.max_epochs, cfg.patience), (16, 50, 1));
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = TrainConfig::new(Phase::One, OptimizerKind::Adam, 1);
        cfg.batch_size = 0;
        assert!(cfg.validate().is_err());
        let mut p = PhaseConfig::two();
        p.reinit_backbone = true;
        assert!(p.validate().is_err());
        p.init = WeightsOrigin::RandomHeUniform;
        p.validate().unwrap();
    }
}
