use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::early_stop::{early_stopping, StopDecision};
use super::optim::Optimizer;
use super::{TrainConfig, TrainError};
use crate::dataset::{DatasetSplits, ImageRecord};
use crate::loader::{batch_tensor, ImageSource};
use crate::metrics::{decide_all, Scores};
use crate::modelkit::{Classifier, Parameters};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochTrain {
    pub loss: f64,
    pub accuracy: f64,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub learning_rate: f64,
    pub wall_ms: u64,
}

/// Anything that can be trained epoch by epoch and rolled back to an
/// earlier state.
pub trait Learner {
    type Snapshot;

    /// `epoch` is 1-based.
    fn train_epoch(&mut self, epoch: usize) -> Result<EpochTrain, TrainError>;
    fn validation_accuracy(&mut self) -> Result<f64, TrainError>;
    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snapshot: &Self::Snapshot) -> Result<(), TrainError>;
    fn learning_rate(&self) -> f64;
}

#[derive(Debug, Clone)]
pub struct FitOutcome<S> {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best: S,
    pub stopped_early: bool,
}

/// Runs epochs until early stopping fires or `max_epochs` is reached, then
/// restores the learner to its best-validation state.
pub fn fit<L: Learner>(
    learner: &mut L,
    max_epochs: usize,
    patience: usize,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<FitOutcome<L::Snapshot>, TrainError> {
    if max_epochs == 0 {
        return Err(TrainError::InvalidConfig("max_epochs must be at least 1".into()));
    }
    let mut history = Vec::new();
    let mut val_history = Vec::new();
    let mut best: Option<(usize, f64, L::Snapshot)> = None;
    let mut stopped_early = false;
    for epoch in 1..=max_epochs {
        let start = Instant::now();
        let tr = learner.train_epoch(epoch)?;
        let val_acc = learner.validation_accuracy()?;
        let record = EpochRecord {
            epoch,
            train_loss: tr.loss,
            train_acc: tr.accuracy,
            val_acc,
            learning_rate: learner.learning_rate(),
            wall_ms: start.elapsed().as_millis() as u64,
        };
        on_epoch(&record);
        history.push(record);
        val_history.push(val_acc);
        if best.as_ref().is_none_or(|(_, b, _)| val_acc > *b) {
            best = Some((epoch, val_acc, learner.snapshot()));
        }
        if let StopDecision::Stop { .. } = early_stopping(&val_history, patience) {
            stopped_early = true;
            break;
        }
    }
    let (best_epoch, _, snapshot) = best.expect("at least one epoch ran");
    learner.restore(&snapshot)?;
    Ok(FitOutcome { history, best_epoch, best: snapshot, stopped_early })
}

/// Model scores over `records`, in order.
pub fn score_records(
    model: &Classifier,
    source: &dyn ImageSource,
    records: &[ImageRecord],
    batch_size: usize,
) -> Result<Scores, TrainError> {
    let size = model.spec().backbone.input_size;
    let mut all: Option<Scores> = None;
    for chunk in records.chunks(batch_size.max(1)) {
        let refs: Vec<&ImageRecord> = chunk.iter().collect();
        let scores = model.forward(&batch_tensor(source, &refs, size)?)?;
        match all.as_mut() {
            Some(a) => a.extend(scores)?,
            None => all = Some(scores),
        }
    }
    all.ok_or(TrainError::EmptySplit("scored"))
}

fn labels_of(records: &[ImageRecord]) -> Result<Vec<usize>, TrainError> {
    Ok(records.iter().map(ImageRecord::label).collect::<Result<_, _>>()?)
}

fn accuracy(predicted: &[usize], labels: &[usize]) -> f64 {
    let hits = predicted.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

/// A [`Classifier`] trained with seeded, shuffled mini-batches.
pub struct ClassifierLearner<'a> {
    model: &'a mut Classifier,
    optimizer: Optimizer,
    source: &'a dyn ImageSource,
    train: &'a [ImageRecord],
    val: &'a [ImageRecord],
    train_labels: Vec<usize>,
    val_labels: Vec<usize>,
    batch_size: usize,
    seed: u64,
}

impl<'a> ClassifierLearner<'a> {
    pub fn new(
        model: &'a mut Classifier,
        source: &'a dyn ImageSource,
        train: &'a [ImageRecord],
        val: &'a [ImageRecord],
        cfg: &TrainConfig,
    ) -> Result<Self, TrainError> {
        if train.is_empty() {
            return Err(TrainError::EmptySplit("train"));
        }
        if val.is_empty() {
            return Err(TrainError::EmptySplit("val"));
        }
        let classes = model.spec().task.class_count();
        let train_labels = labels_of(train)?;
        let val_labels = labels_of(val)?;
        if let Some(&bad) = train_labels.iter().chain(&val_labels).find(|&&l| l >= classes) {
            return Err(TrainError::InvalidConfig(format!(
                "label {bad} does not fit the model's {} task",
                model.spec().task
            )));
        }
        Ok(Self {
            model,
            optimizer: Optimizer::new(cfg.optimizer.clone())?,
            source,
            train,
            val,
            train_labels,
            val_labels,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
        })
    }

    /// Sample order for an epoch: a fixed function of the seed and epoch.
    pub fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut rng);
        order
    }
}

impl Learner for ClassifierLearner<'_> {
    type Snapshot = Parameters;

    fn train_epoch(&mut self, epoch: usize) -> Result<EpochTrain, TrainError> {
        let size = self.model.spec().backbone.input_size;
        let order = self.epoch_order(epoch);
        let (mut loss_sum, mut hits) = (0.0, 0usize);
        for (batch, idx) in order.chunks(self.batch_size).enumerate() {
            let records: Vec<&ImageRecord> = idx.iter().map(|&i| &self.train[i]).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| self.train_labels[i]).collect();
            let x = batch_tensor(self.source, &records, size)?;
            let out = self.model.compute_gradients(&x, &labels)?;
            if !out.loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: batch + 1, loss: out.loss });
            }
            self.optimizer.step(self.model.params_mut())?;
            loss_sum += out.loss * labels.len() as f64;
            hits += out.predictions.iter().zip(&labels).filter(|(p, y)| p == y).count();
        }
        let n = self.train.len() as f64;
        Ok(EpochTrain { loss: loss_sum / n, accuracy: hits as f64 / n })
    }

    fn validation_accuracy(&mut self) -> Result<f64, TrainError> {
        let scores = score_records(self.model, self.source, self.val, self.batch_size)?;
        Ok(accuracy(&decide_all(&scores)?, &self.val_labels))
    }

    fn snapshot(&self) -> Parameters {
        self.model.parameters()
    }

    fn restore(&mut self, snapshot: &Parameters) -> Result<(), TrainError> {
        Ok(self.model.load_parameters(snapshot)?)
    }

    fn learning_rate(&self) -> f64 {
        self.optimizer.config().learning_rate
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub history: Vec<EpochRecord>,
    /// 1-based.
    pub best_epoch: usize,
    pub best_parameters: Parameters,
    pub stopped_early: bool,
}

impl TrainResult {
    pub fn best_val_accuracy(&self) -> f64 {
        self.history[self.best_epoch - 1].val_acc
    }
}

/// Applies the phase settings to `model`, trains on `splits.train` with
/// early stopping on `splits.val`, and leaves `model` holding the best
/// weights.
pub fn train(
    model: &mut Classifier,
    splits: &DatasetSplits,
    source: &dyn ImageSource,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainResult, TrainError> {
    cfg.validate()?;
    if cfg.phase.reinit_backbone {
        model.reinit_backbone(cfg.seed)?;
    }
    model.set_backbone_frozen(cfg.phase.backbone_frozen)?;
    let mut learner = ClassifierLearner::new(model, source, &splits.train, &splits.val, cfg)?;
    let outcome = fit(&mut learner, cfg.max_epochs, cfg.patience, on_epoch)?;
    Ok(TrainResult {
        history: outcome.history,
        best_epoch: outcome.best_epoch,
        best_parameters: outcome.best,
        stopped_early: outcome.stopped_early,
    })
}
