use serde::{Deserialize, Serialize};

use super::MetricsError;

/// ROC points from the strictest threshold to the loosest. `thresholds[i]`
/// is the cutoff (score ≥ threshold ⇒ positive) producing point `i`; it is
/// empty for averaged curves that have no single cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub thresholds: Vec<f64>,
}

impl RocCurve {
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.fpr.iter().copied().zip(self.tpr.iter().copied())
    }

    /// `fpr,tpr,threshold` rows with a header; the threshold column is blank
    /// for averaged curves.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,tpr,threshold\n");
        for (i, (f, t)) in self.points().enumerate() {
            match self.thresholds.get(i) {
                Some(th) => out.push_str(&format!("{f},{t},{th}\n")),
                None => out.push_str(&format!("{f},{t},\n")),
            }
        }
        out
    }

    /// Lowest and highest TPR reached at false-positive rate `x`, by linear
    /// interpolation between points.
    fn tpr_range_at(&self, x: f64) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, (f, t)) in self.points().enumerate() {
            if f == x {
                lo = lo.min(t);
                hi = hi.max(t);
            } else if i > 0 && self.fpr[i - 1] < x && x < f {
                let (f0, t0) = (self.fpr[i - 1], self.tpr[i - 1]);
                let v = t0 + (t - t0) * (x - f0) / (f - f0);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }
}

/// Sweeps every distinct score as a threshold, descending. Tied scores move
/// the curve diagonally in one step.
pub fn roc_curve(scores: &[f64], positives: &[bool]) -> Result<RocCurve, MetricsError> {
    if scores.len() != positives.len() {
        return Err(MetricsError::LengthMismatch(scores.len(), positives.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore);
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::DegenerateLabels(None));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let max = scores[order[0]];
    let mut curve = RocCurve { fpr: vec![0.0], tpr: vec![0.0], thresholds: vec![max + 1.0] };
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if positives[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        curve.fpr.push(fp as f64 / n_neg as f64);
        curve.tpr.push(tp as f64 / n_pos as f64);
        curve.thresholds.push(threshold);
    }
    Ok(curve)
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .fpr
        .windows(2)
        .zip(curve.tpr.windows(2))
        .map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) / 2.0)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassAuc {
    pub micro_auc: f64,
    /// Unweighted mean of the defined per-class AUCs.
    pub macro_auc: f64,
    pub per_class_auc: Vec<Option<f64>>,
    pub per_class: Vec<Option<RocCurve>>,
    pub micro: RocCurve,
    /// Vertical average of the per-class curves, for plotting.
    pub macro_curve: RocCurve,
    /// Classes absent from (or covering all of) `y_true`; excluded from macro.
    pub skipped: Vec<usize>,
}

/// One-vs-rest AUCs. Micro pools every `(sample, class)` indicator/score
/// pair; macro averages per-class AUCs.
pub fn multiclass_auc(probs: &[Vec<f64>], y_true: &[usize]) -> Result<MulticlassAuc, MetricsError> {
    if probs.len() != y_true.len() {
        return Err(MetricsError::LengthMismatch(probs.len(), y_true.len()));
    }
    let k = probs.first().map(Vec::len).ok_or(MetricsError::EmptyVector)?;
    for (row, p) in probs.iter().enumerate() {
        if p.len() != k {
            return Err(MetricsError::ShapeMismatch(format!("row {row} has {} columns, expected {k}", p.len())));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(MetricsError::RowNotNormalized { row, sum });
        }
    }
    if let Some(&label) = y_true.iter().find(|&&y| y >= k) {
        return Err(MetricsError::LabelOutOfRange { label, k });
    }

    let mut per_class = Vec::with_capacity(k);
    let mut skipped = Vec::new();
    for c in 0..k {
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let positives: Vec<bool> = y_true.iter().map(|&y| y == c).collect();
        match roc_curve(&scores, &positives) {
            Ok(curve) => per_class.push(Some(curve)),
            Err(MetricsError::DegenerateLabels(_)) => {
                skipped.push(c);
                per_class.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let per_class_auc: Vec<Option<f64>> = per_class.iter().map(|c| c.as_ref().map(auc)).collect();
    let defined: Vec<f64> = per_class_auc.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(MetricsError::DegenerateLabels(skipped.first().copied()));
    }
    let macro_auc = defined.iter().sum::<f64>() / defined.len() as f64;

    let flat_scores: Vec<f64> = probs.iter().flatten().copied().collect();
    let flat_pos: Vec<bool> = y_true.iter().flat_map(|&y| (0..k).map(move |c| c == y)).collect();
    let micro = roc_curve(&flat_scores, &flat_pos)?;
    let micro_auc = auc(&micro);
    let macro_curve = average_curves(per_class.iter().flatten());

    Ok(MulticlassAuc { micro_auc, macro_auc, per_class_auc, per_class, micro, macro_curve, skipped })
}

fn average_curves<'a>(curves: impl Iterator<Item = &'a RocCurve> + Clone) -> RocCurve {
    let mut xs: Vec<f64> = curves.clone().flat_map(|c| c.fpr.iter().copied()).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let n = curves.clone().count() as f64;
    let mut out = RocCurve { fpr: Vec::new(), tpr: Vec::new(), thresholds: Vec::new() };
    for x in xs {
        let (lo, hi) = curves
            .clone()
            .map(|c| c.tpr_range_at(x))
            .fold((0.0, 0.0), |(a, b), (l, h)| (a + l, b + h));
        out.fpr.push(x);
        out.tpr.push(lo / n);
        if hi > lo {
            out.fpr.push(x);
            out.tpr.push(hi / n);
        }
    }
    out
}
