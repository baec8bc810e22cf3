use serde::{Deserialize, Serialize};

use super::confusion::{confusion_matrix, precision_recall_f1, ClassMetrics, ConfusionMatrix};
use super::roc::{multiclass_auc, RocCurve};
use super::{decide_all, MetricsError, Scores};
use crate::dataset::TaskKind;

/// Row labels of the metrics table, in order.
pub const TABLE_METRICS: [&str; 6] =
    ["Test Accuracy", "Precision", "Recall", "Micro Average AUC", "Macro Average AUC", "F1-Score"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSet {
    /// `None` for classes without both positives and negatives.
    pub per_class: Vec<Option<RocCurve>>,
    pub micro: RocCurve,
    pub macro_average: RocCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: TaskKind,
    pub samples: usize,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub micro_auc: f64,
    pub macro_auc: f64,
    pub per_class_auc: Vec<Option<f64>>,
    pub confusion: ConfusionMatrix,
    pub roc: RocSet,
    /// Degenerate cases met while computing the report.
    pub flags: Vec<String>,
}

impl EvalReport {
    /// The six table rows. Precision, recall and F1 are macro averages.
    pub fn table_rows(&self) -> [(&'static str, f64); 6] {
        [
            (TABLE_METRICS[0], self.accuracy),
            (TABLE_METRICS[1], self.macro_precision),
            (TABLE_METRICS[2], self.macro_recall),
            (TABLE_METRICS[3], self.micro_auc),
            (TABLE_METRICS[4], self.macro_auc),
            (TABLE_METRICS[5], self.macro_f1),
        ]
    }

    pub fn table_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        for (name, v) in self.table_rows() {
            out.push_str(&format!("{name},{v}\n"));
        }
        out
    }
}

/// Applies the task's decision rule, then computes every metric.
pub fn evaluate(scores: &Scores, y_true: &[usize], task: TaskKind) -> Result<EvalReport, MetricsError> {
    let k = task.class_count();
    match (task, scores) {
        (TaskKind::Binary, Scores::Binary(_)) => {}
        (TaskKind::Three | TaskKind::Five, Scores::Multiclass(rows)) => {
            if let Some(r) = rows.iter().find(|r| r.len() != k) {
                return Err(MetricsError::ShapeMismatch(format!("{task} task needs {k} columns, got {}", r.len())));
            }
        }
        _ => return Err(MetricsError::ShapeMismatch(format!("scores do not match the {task} task"))),
    }
    if scores.len() != y_true.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), y_true.len()));
    }
    let predicted = decide_all(scores)?;
    let confusion = confusion_matrix(y_true, &predicted, k)?;
    let prf = precision_recall_f1(&confusion)?;
    let aucs = multiclass_auc(&scores.probability_rows(), y_true)?;

    let mut flags = Vec::new();
    for (c, m) in prf.per_class.iter().enumerate() {
        if m.precision_undefined {
            flags.push(format!("class {c}: no predictions, precision set to 0"));
        }
        if m.recall_undefined {
            flags.push(format!("class {c}: no true samples, recall set to 0"));
        }
    }
    for c in &aucs.skipped {
        flags.push(format!("class {c}: ROC undefined, excluded from macro AUC"));
    }

    Ok(EvalReport {
        task,
        samples: y_true.len(),
        accuracy: confusion.accuracy(),
        per_class: prf.per_class,
        macro_precision: prf.macro_precision,
        macro_recall: prf.macro_recall,
        macro_f1: prf.macro_f1,
        weighted_precision: prf.weighted_precision,
        weighted_recall: prf.weighted_recall,
        weighted_f1: prf.weighted_f1,
        micro_auc: aucs.micro_auc,
        macro_auc: aucs.macro_auc,
        per_class_auc: aucs.per_class_auc,
        confusion,
        roc: RocSet { per_class: aucs.per_class, micro: aucs.micro, macro_average: aucs.macro_curve },
        flags,
    })
}
