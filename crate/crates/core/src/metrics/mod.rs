//! Decision rules and evaluation metrics: thresholding, argmax, confusion
//! matrices, precision/recall/F1, ROC curves and micro/macro AUC.

mod confusion;
mod report;
mod roc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use confusion::{confusion_matrix, precision_recall_f1, ClassMetrics, ClassificationMetrics, ConfusionMatrix};
pub use report::{evaluate, EvalReport, RocSet, TABLE_METRICS};
pub use roc::{auc, multiclass_auc, roc_curve, MulticlassAuc, RocCurve};

/// Scores at or below this value are decided negative.
pub const BINARY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("empty probability vector")]
    EmptyVector,
    #[error("label {label} outside {k} classes")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("ROC needs at least one positive and one negative{}", .0.map(|c| format!(" (class {c})")).unwrap_or_default())]
    DegenerateLabels(Option<usize>),
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("probability row {row} sums to {sum}")]
    RowNotNormalized { row: usize, sum: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Model outputs for a batch: one sigmoid score per sample, or one
/// probability row per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scores {
    Binary(Vec<f64>),
    Multiclass(Vec<Vec<f64>>),
}

impl Scores {
    pub fn len(&self) -> usize {
        match self {
            Scores::Binary(s) => s.len(),
            Scores::Multiclass(rows) => rows.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extend(&mut self, other: Scores) -> Result<(), MetricsError> {
        match (self, other) {
            (Scores::Binary(a), Scores::Binary(b)) => a.extend(b),
            (Scores::Multiclass(a), Scores::Multiclass(b)) => a.extend(b),
            _ => return Err(MetricsError::ShapeMismatch("cannot mix binary and multiclass scores".into())),
        }
        Ok(())
    }

    /// Probability matrix view; a binary score `s` becomes `[1 − s, s]`.
    pub fn probability_rows(&self) -> Vec<Vec<f64>> {
        match self {
            Scores::Binary(s) => s.iter().map(|&p| vec![1.0 - p, p]).collect(),
            Scores::Multiclass(rows) => rows.clone(),
        }
    }
}

/// 0 when `score <= threshold`, 1 otherwise.
pub fn binary_decision(score: f64, threshold: f64) -> Result<usize, MetricsError> {
    if !(0.0..=1.0).contains(&score) {
        return Err(MetricsError::ScoreOutOfRange(score));
    }
    Ok(usize::from(score > threshold))
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_decision(probs: &[f64]) -> Result<usize, MetricsError> {
    let (first, rest) = probs.split_first().ok_or(MetricsError::EmptyVector)?;
    let mut best = (0, *first);
    for (i, &p) in rest.iter().enumerate() {
        if p > best.1 {
            best = (i + 1, p);
        }
    }
    Ok(best.0)
}

/// Applies the task's decision rule to every sample.
pub fn decide_all(scores: &Scores) -> Result<Vec<usize>, MetricsError> {
    match scores {
        Scores::Binary(s) => s.iter().map(|&p| binary_decision(p, BINARY_THRESHOLD)).collect(),
        Scores::Multiclass(rows) => rows.iter().map(|r| argmax_decision(r)).collect(),
    }
}
