use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub cells: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_cells(cells: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let k = cells.len();
        if let Some(row) = cells.iter().find(|r| r.len() != k) {
            return Err(MetricsError::LengthMismatch(row.len(), k));
        }
        Ok(Self { k, cells })
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.cells[i][i]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.cells[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.cells.iter().map(|r| r[c]).sum()
    }

    /// `trace / total`; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for c in 0..self.k {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for (t, row) in self.cells.iter().enumerate() {
            out.push_str(&t.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], k: usize) -> Result<ConfusionMatrix, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let mut cells = vec![vec![0u64; k]; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if let Some(&label) = [t, p].iter().find(|&&l| l >= k) {
            return Err(MetricsError::LabelOutOfRange { label, k });
        }
        cells[t][p] += 1;
    }
    Ok(ConfusionMatrix { k, cells })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of samples whose true class is this one.
    pub support: u64,
    /// Set when nothing was predicted as this class (precision reported as 0).
    pub precision_undefined: bool,
    /// Set when the class has no true samples (recall reported as 0).
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

/// Per-class precision, recall and F1 with macro (unweighted) and
/// support-weighted averages. Zero denominators yield 0 and set a flag.
pub fn precision_recall_f1(cm: &ConfusionMatrix) -> Result<ClassificationMetrics, MetricsError> {
    let total = cm.total();
    if total == 0 || cm.k == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let ratio = |num: u64, den: u64| if den == 0 { (0.0, true) } else { (num as f64 / den as f64, false) };
    let per_class: Vec<ClassMetrics> = (0..cm.k)
        .map(|c| {
            let tp = cm.cells[c][c];
            let (precision, precision_undefined) = ratio(tp, cm.col_sum(c));
            let (recall, recall_undefined) = ratio(tp, cm.row_sum(c));
            let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
            ClassMetrics { precision, recall, f1, support: cm.row_sum(c), precision_undefined, recall_undefined }
        })
        .collect();
    let k = cm.k as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k;
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
    };
    Ok(ClassificationMetrics {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        weighted_precision: weighted(|m| m.precision),
        weighted_recall: weighted(|m| m.recall),
        weighted_f1: weighted(|m| m.f1),
        per_class,
    })
}
