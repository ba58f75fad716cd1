//! Binary classification metrics. The positive class for the confusion
//! matrix is the High performer, which makes the all-High baseline read as
//! recall 1.0; AUC instead scores detection of the at-risk Low class and is
//! computed from the probability of Low.

use serde::{Deserialize, Serialize};

use crate::domain::Performance;

/// 2x2 confusion counts with High as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn from_labels(y_true: &[Performance], y_pred: &[Performance]) -> Self {
        assert_eq!(y_true.len(), y_pred.len());
        let mut c = ConfusionCounts::default();
        for (t, p) in y_true.iter().zip(y_pred) {
            match (t, p) {
                (Performance::High, Performance::High) => c.tp += 1,
                (Performance::Low, Performance::High) => c.fp += 1,
                (Performance::Low, Performance::Low) => c.tn += 1,
                (Performance::High, Performance::Low) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// `num/den`, or 0 when the denominator is empty. Keeps constant-classifier
/// rows computable on degenerate cohorts.
fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Rank-statistic AUC for detecting Low performers; `None` when the
    /// truth is single-class.
    pub auc: Option<f64>,
    pub kappa: f64,
    pub balanced_accuracy: f64,
}

/// Compute the full seven-metric battery. `prob_low` is required for AUC;
/// without it AUC is reported missing.
pub fn classification_metrics(
    y_true: &[Performance],
    y_pred: &[Performance],
    prob_low: Option<&[f64]>,
) -> ClassificationMetrics {
    let c = ConfusionCounts::from_labels(y_true, y_pred);
    let n = c.total();
    let accuracy = rate(c.tp + c.tn, n);
    let precision = rate(c.tp, c.tp + c.fp);
    let recall = rate(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let tnr = rate(c.tn, c.tn + c.fp);
    let balanced_accuracy = 0.5 * (recall + tnr);

    // Cohen's kappa: chance agreement from the marginals.
    let p_o = accuracy;
    let p_true_high = rate(c.tp + c.fn_, n);
    let p_pred_high = rate(c.tp + c.fp, n);
    let p_e = p_true_high * p_pred_high + (1.0 - p_true_high) * (1.0 - p_pred_high);
    let kappa = if (1.0 - p_e).abs() < 1e-15 {
        0.0
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };

    let auc = prob_low.and_then(|probs| auc_low(y_true, probs));

    ClassificationMetrics {
        accuracy,
        precision,
        recall,
        f1,
        auc,
        kappa,
        balanced_accuracy,
    }
}

/// Mann-Whitney AUC with midrank tie correction. Positive class is Low and
/// `prob_low` its score. `None` when either class is absent.
pub fn auc_low(y_true: &[Performance], prob_low: &[f64]) -> Option<f64> {
    assert_eq!(y_true.len(), prob_low.len());
    let n_pos = y_true.iter().filter(|t| **t == Performance::Low).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..y_true.len()).collect();
    order.sort_by(|&a, &b| prob_low[a].partial_cmp(&prob_low[b]).expect("finite scores"));

    // midranks over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && prob_low[order[j + 1]] == prob_low[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0; // ranks are 1-based
        for &idx in &order[i..=j] {
            if y_true[idx] == Performance::Low {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Performance::{High, Low};

    #[test]
    fn hand_traced_confusion_table() {
        // tp=3 fp=1 tn=4 fn=2
        let y_true = [High, High, High, Low, Low, Low, Low, Low, High, High];
        let y_pred = [High, High, High, High, Low, Low, Low, Low, Low, Low];
        let m = classification_metrics(&y_true, &y_pred, None);
        assert!((m.precision - 0.75).abs() < 1e-12);
        assert!((m.recall - 0.6).abs() < 1e-12);
        assert!((m.f1 - 2.0 / 3.0).abs() < 1e-12);
        // p_o = 0.7, p_e = 0.5*0.4 + 0.5*0.6 = 0.5, kappa = 0.4
        assert!((m.kappa - 0.4).abs() < 1e-12);
    }

    #[test]
    fn all_high_baseline_on_imbalanced_truth() {
        // 2019-shaped: 133 high of 196
        let mut y_true = vec![High; 133];
        y_true.extend(vec![Low; 63]);
        let y_pred = vec![High; 196];
        let prob = vec![0.5; 196];
        let m = classification_metrics(&y_true, &y_pred, Some(&prob));
        assert!((m.accuracy - 133.0 / 196.0).abs() < 1e-12);
        assert!((m.recall - 1.0).abs() < 1e-12);
        assert!((m.kappa - 0.0).abs() < 1e-12);
        assert!((m.balanced_accuracy - 0.5).abs() < 1e-12);
        assert!((m.auc.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_score_one() {
        let y_true = [High, Low, High, Low];
        let prob = [0.1, 0.9, 0.2, 0.8];
        let m = classification_metrics(&y_true, &y_true, Some(&prob));
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f1, 1.0);
        assert_eq!(m.kappa, 1.0);
        assert_eq!(m.balanced_accuracy, 1.0);
        assert_eq!(m.auc, Some(1.0));
    }

    #[test]
    fn auc_none_for_single_class_truth() {
        let y_true = [High, High];
        let m = classification_metrics(&y_true, &y_true, Some(&[0.1, 0.2]));
        assert_eq!(m.auc, None);
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn auc_counts_concordant_pairs_with_ties() {
        let y_true = [Low, Low, High, High];
        let prob = [0.9, 0.5, 0.5, 0.1];
        // pairs: (0.9 vs 0.5) + (0.9 vs 0.1) + (0.5 vs 0.5 tie=0.5) + (0.5 vs 0.1)
        // = (1 + 1 + 0.5 + 1) / 4 = 0.875
        assert!((auc_low(&y_true, &prob).unwrap() - 0.875).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let y_true = [Low, High, Low, High, High, Low, High];
        let prob = [0.8, 0.3, 0.6, 0.35, 0.1, 0.55, 0.2];
        let a = auc_low(&y_true, &prob).unwrap();
        let squashed: Vec<f64> = prob.iter().map(|p| 1.0 / (1.0 + (-5.0 * p).exp())).collect();
        let b = auc_low(&y_true, &squashed).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}
