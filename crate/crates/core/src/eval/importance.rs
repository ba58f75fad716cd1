//! Feature-importance aggregation for the LR approach: per-fold importance
//! scores (absolute standardized coefficients) are summed across folds into
//! one final ranking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// One feature selected in one cross-validation fold, with the coefficient
/// it received there. Coefficients are oriented toward predicting the Low
/// performer, so a negative coefficient means the feature raises GPA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedFeature {
    pub name: String,
    pub coefficient: f64,
}

impl SelectedFeature {
    pub fn importance(&self) -> f64 {
        self.coefficient.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub feature: String,
    /// Sum of per-fold absolute coefficients.
    pub score: f64,
    /// Mean coefficient across the folds where the feature was selected.
    pub mean_coefficient: f64,
    /// "+" when the feature is associated with higher GPA, "-" with lower.
    pub impact_on_gpa: String,
    pub folds_selected: usize,
}

/// Sum importances per feature over all folds where it was selected, sort
/// descending (ties by name), never-selected features absent.
pub fn importance_ranking(folds: &[Vec<SelectedFeature>]) -> Vec<ImportanceRow> {
    let mut acc: BTreeMap<&str, (f64, f64, usize)> = BTreeMap::new();
    for fold in folds {
        for sel in fold {
            let entry = acc.entry(sel.name.as_str()).or_insert((0.0, 0.0, 0));
            entry.0 += sel.importance();
            entry.1 += sel.coefficient;
            entry.2 += 1;
        }
    }
    let mut rows: Vec<ImportanceRow> = acc
        .into_iter()
        .map(|(name, (score, coef_sum, folds_selected))| {
            let mean_coefficient = coef_sum / folds_selected as f64;
            ImportanceRow {
                feature: name.to_string(),
                score,
                mean_coefficient,
                impact_on_gpa: if mean_coefficient < 0.0 {
                    "+"
                } else if mean_coefficient > 0.0 {
                    "-"
                } else {
                    "0"
                }
                .to_string(),
                folds_selected,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("finite scores")
            .then_with(|| a.feature.cmp(&b.feature))
    });
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sel(name: &str, coef: f64) -> SelectedFeature {
        SelectedFeature {
            name: name.to_string(),
            coefficient: coef,
        }
    }

    #[test]
    fn score_is_sum_over_folds() {
        let folds: Vec<Vec<SelectedFeature>> = (0..5).map(|_| vec![sel("f", 1.0)]).collect();
        let rows = importance_ranking(&folds);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].score, 5.0);
        assert_eq!(rows[0].folds_selected, 5);
        assert_eq!(rows[0].impact_on_gpa, "-");
    }

    #[test]
    fn never_selected_feature_absent_and_ties_by_name() {
        let folds = vec![vec![sel("b", -2.0), sel("a", 2.0)], vec![]];
        let rows = importance_ranking(&folds);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].feature, "a");
        assert_eq!(rows[1].feature, "b");
        assert_eq!(rows[1].impact_on_gpa, "+");
    }
}
