use serde::{Deserialize, Serialize};

/// Epochs are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopDecision {
    Continue,
    Stop { best_epoch: usize },
}

/// Earliest epoch (1-based) with the highest value, or `None` when empty.
pub fn best_epoch(history: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in history.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i + 1)
}

/// Stops once the validation accuracy has been strictly below its running
/// maximum for `patience` consecutive epochs. Plateaus do not count.
pub fn early_stopping(val_accuracy: &[f64], patience: usize) -> StopDecision {
    let mut running_max = f64::NEG_INFINITY;
    let mut streak = 0;
    for &v in val_accuracy {
        if v < running_max {
            streak += 1;
        } else {
            streak = 0;
        }
        running_max = running_max.max(v);
    }
    match best_epoch(val_accuracy) {
        Some(best_epoch) if patience > 0 && streak >= patience => StopDecision::Stop { best_epoch },
        _ => StopDecision::Continue,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(early_stopping(&[0.6, 0.7, 0.65], 1), StopDecision::Stop { best_epoch: 2 });
        assert_eq!(early_stopping(&[0.6, 0.7], 1), StopDecision::Continue);
        assert_eq!(early_stopping(&[0.7, 0.7, 0.7], 1), StopDecision::Continue);
    }

    #[test]
    fn patience_two() {
        assert_eq!(early_stopping(&[0.5, 0.8, 0.7], 2), StopDecision::Continue);
        assert_eq!(early_stopping(&[0.5, 0.8, 0.7, 0.75], 2), StopDecision::Stop { best_epoch: 2 });
        // a plateau at the max resets the streak
        assert_eq!(early_stopping(&[0.8, 0.7, 0.8, 0.7], 2), StopDecision::Continue);
    }

    #[test]
    fn ties_pick_earliest() {
        assert_eq!(best_epoch(&[0.5, 0.9, 0.9, 0.1]), Some(2));
        assert_eq!(best_epoch(&[]), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn patience_one_stops_at_first_drop(hist in proptest::collection::vec(0u8..20, 1..30)) {
                let hist: Vec<f64> = hist.into_iter().map(|v| v as f64 / 20.0).collect();
                // replay epoch by epoch as the training loop does
                let mut stopped = None;
                for n in 1..=hist.len() {
                    if let StopDecision::Stop { best_epoch } = early_stopping(&hist[..n], 1) {
                        stopped = Some((n, best_epoch));
                        break;
                    }
                }
                let first_drop = (1..hist.len()).find(|&i| hist[i] < hist[..i].iter().copied().fold(f64::MIN, f64::max));
                match (stopped, first_drop) {
                    (Some((n, best)), Some(i)) => {
                        prop_assert_eq!(n, i + 1);
                        prop_assert!(best < n);
                    }
                    (None, None) => {}
                    other => prop_assert!(false, "mismatch {:?}", other),
                }
            }
        }
    }
}
