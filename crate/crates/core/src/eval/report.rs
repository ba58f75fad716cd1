//! Report assembly: the full metric battery, fairness records for every
//! trait x metric pair, the transition breakdown, and rendering to JSON and
//! a human-readable Markdown summary.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{ParticipantId, Performance, ProtectedTrait, ProtectedTraits, SealedLabels};

use super::fairness::{
    demographic_parity, equal_opportunity, equalized_odds, FairnessResult, FairnessValue,
};
use super::importance::ImportanceRow;
use super::metrics::{classification_metrics, ClassificationMetrics};
use super::transition::{transition_breakdown, TransitionBreakdown};
use super::UnsealPermit;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("refusing to score: model lineage includes evaluation cohort `{0}`")]
    BrokenLineage(String),
    #[error("prediction/label participant sets differ: {0}")]
    ParticipantMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessMetricKind {
    DemographicParity,
    EqualizedOdds,
    EqualOpportunity,
}

impl FairnessMetricKind {
    pub const ALL: [FairnessMetricKind; 3] = [
        FairnessMetricKind::DemographicParity,
        FairnessMetricKind::EqualizedOdds,
        FairnessMetricKind::EqualOpportunity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FairnessMetricKind::DemographicParity => "demographic_parity",
            FairnessMetricKind::EqualizedOdds => "equalized_odds",
            FairnessMetricKind::EqualOpportunity => "equal_opportunity",
        }
    }
}

/// One trait x metric fairness outcome as it appears in `report.json`.
/// An infinite ratio serializes as `null` with `ratio_infinite` set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FairnessRecord {
    pub trait_name: ProtectedTrait,
    pub metric: FairnessMetricKind,
    pub difference: Option<f64>,
    pub signed_difference: Option<f64>,
    pub ratio: Option<f64>,
    pub ratio_infinite: bool,
    pub reasonable: Option<bool>,
    pub undefined_reason: Option<String>,
}

impl FairnessRecord {
    fn from_result(trait_name: ProtectedTrait, metric: FairnessMetricKind, r: FairnessResult) -> Self {
        match r {
            Ok(FairnessValue {
                difference,
                signed_difference,
                ratio,
            }) => FairnessRecord {
                trait_name,
                metric,
                difference: Some(difference),
                signed_difference: Some(signed_difference),
                ratio: ratio.is_finite().then_some(ratio),
                ratio_infinite: ratio.is_infinite(),
                reasonable: Some(super::fairness::reasonable(difference, ratio)),
                undefined_reason: None,
            },
            Err(reason) => FairnessRecord {
                trait_name,
                metric,
                difference: None,
                signed_difference: None,
                ratio: None,
                ratio_infinite: false,
                reasonable: None,
                undefined_reason: Some(reason.as_str().to_string()),
            },
        }
    }

    /// True when the record is defined and outside the reasonable range.
    pub fn unreasonable(&self) -> bool {
        self.reasonable == Some(false)
    }
}

/// All trait x metric fairness records for one prediction set.
pub fn fairness_records(
    y_true: &[Performance],
    y_pred: &[Performance],
    trait_membership: &BTreeMap<ProtectedTrait, Vec<bool>>,
) -> Vec<FairnessRecord> {
    let mut records = Vec::new();
    for (trait_name, group) in trait_membership {
        records.push(FairnessRecord::from_result(
            *trait_name,
            FairnessMetricKind::DemographicParity,
            demographic_parity(y_pred, group),
        ));
        records.push(FairnessRecord::from_result(
            *trait_name,
            FairnessMetricKind::EqualizedOdds,
            equalized_odds(y_true, y_pred, group),
        ));
        records.push(FairnessRecord::from_result(
            *trait_name,
            FairnessMetricKind::EqualOpportunity,
            equal_opportunity(y_true, y_pred, group),
        ));
    }
    records
}

/// One participant's scored prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub label: Performance,
    pub prob_low: f64,
}

/// Predictions of one trained approach, tagged with the cohorts whose
/// current-term labels were visible during training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredPredictions {
    pub approach: String,
    pub trained_on: BTreeSet<String>,
    pub rows: BTreeMap<ParticipantId, PredictionRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub approach: String,
    pub cohort: String,
    pub n: usize,
    pub metrics: ClassificationMetrics,
    pub fairness: Vec<FairnessRecord>,
    pub transitions: Option<TransitionBreakdown>,
    pub importance: Option<Vec<ImportanceRow>>,
    pub leakage_flags: Vec<String>,
    pub notes: Vec<String>,
}

impl EvaluationReport {
    pub fn any_unreasonable_fairness(&self) -> bool {
        self.fairness.iter().any(|r| r.unreasonable())
    }
}

/// Inputs shared by the plain and sealed evaluation entry points.
pub struct EvaluationInputs<'a> {
    pub approach: &'a str,
    pub cohort: &'a str,
    pub predictions: &'a BTreeMap<ParticipantId, PredictionRow>,
    pub gpa_current: &'a BTreeMap<ParticipantId, f64>,
    pub gpa_prior: &'a BTreeMap<ParticipantId, f64>,
    pub traits: &'a ProtectedTraits,
    pub importance: Option<Vec<ImportanceRow>>,
    pub leakage_flags: Vec<String>,
}

fn build_report(inputs: EvaluationInputs<'_>) -> Result<EvaluationReport, EvalError> {
    let pred_ids: BTreeSet<&ParticipantId> = inputs.predictions.keys().collect();
    let label_ids: BTreeSet<&ParticipantId> = inputs.gpa_current.keys().collect();
    if pred_ids != label_ids {
        let missing: Vec<String> = label_ids
            .symmetric_difference(&pred_ids)
            .map(|p| p.to_string())
            .collect();
        return Err(EvalError::ParticipantMismatch(missing.join(",")));
    }

    let ids: Vec<&ParticipantId> = inputs.predictions.keys().collect();
    let y_true: Vec<Performance> = ids
        .iter()
        .map(|p| crate::domain::label_from_gpa(inputs.gpa_current[*p]).expect("gpa in range"))
        .collect();
    let y_pred: Vec<Performance> = ids.iter().map(|p| inputs.predictions[*p].label).collect();
    let prob_low: Vec<f64> = ids.iter().map(|p| inputs.predictions[*p].prob_low).collect();

    let metrics = classification_metrics(&y_true, &y_pred, Some(&prob_low));

    let mut trait_membership: BTreeMap<ProtectedTrait, Vec<bool>> = BTreeMap::new();
    let mut notes = Vec::new();
    if ids.iter().all(|p| inputs.traits.contains_key(*p)) && !ids.is_empty() {
        for t in ProtectedTrait::ALL {
            trait_membership.insert(t, ids.iter().map(|p| inputs.traits[*p].get(t)).collect());
        }
    } else {
        notes.push("fairness skipped: protected traits not defined for every participant".to_string());
    }
    let fairness = fairness_records(&y_true, &y_pred, &trait_membership);

    let transitions = if ids.iter().any(|p| inputs.gpa_prior.contains_key(*p)) {
        let prior: Vec<Option<Performance>> = ids
            .iter()
            .map(|p| {
                inputs
                    .gpa_prior
                    .get(*p)
                    .map(|g| crate::domain::label_from_gpa(*g).expect("gpa in range"))
            })
            .collect();
        Some(transition_breakdown(&prior, &y_true, &y_pred))
    } else {
        None
    };

    Ok(EvaluationReport {
        approach: inputs.approach.to_string(),
        cohort: inputs.cohort.to_string(),
        n: ids.len(),
        metrics,
        fairness,
        transitions,
        importance: inputs.importance,
        leakage_flags: inputs.leakage_flags,
        notes,
    })
}

/// Evaluate predictions against openly available labels.
pub fn evaluate(inputs: EvaluationInputs<'_>) -> Result<EvaluationReport, EvalError> {
    build_report(inputs)
}

/// Score a model on a cohort whose current labels are sealed. The labels are
/// unsealed here, inside the evaluator, after the lineage check proves the
/// model was not trained on this cohort's current labels.
pub fn generalizability_report(
    predictions: &ScoredPredictions,
    sealed: &SealedLabels,
    gpa_prior: &BTreeMap<ParticipantId, f64>,
    traits: &ProtectedTraits,
) -> Result<EvaluationReport, EvalError> {
    if predictions.trained_on.contains(sealed.cohort_id()) {
        return Err(EvalError::BrokenLineage(sealed.cohort_id().to_string()));
    }
    let permit = UnsealPermit::new();
    let gpa_current = sealed.unseal(&permit);
    build_report(EvaluationInputs {
        approach: &predictions.approach,
        cohort: sealed.cohort_id(),
        predictions: &predictions.rows,
        gpa_current,
        gpa_prior,
        traits,
        importance: None,
        leakage_flags: Vec::new(),
    })
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt3).unwrap_or_else(|| "-".to_string())
}

/// Render the Markdown summary: a metrics row, the trait x metric fairness
/// table with reasonable values starred, and the transition table.
pub fn render_summary_md(report: &EvaluationReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "# Evaluation summary: {} on {}\n\nParticipants: {}\n\n",
        report.approach, report.cohort, report.n
    ));
    out.push_str("## Performance\n\n");
    out.push_str("| Accuracy | Precision | Recall | F1 | AUC | Kappa | Balanced accuracy |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    let m = &report.metrics;
    out.push_str(&format!(
        "| {} | {} | {} | {} | {} | {} | {} |\n\n",
        fmt3(m.accuracy),
        fmt3(m.precision),
        fmt3(m.recall),
        fmt3(m.f1),
        fmt_opt(m.auc),
        fmt3(m.kappa),
        fmt3(m.balanced_accuracy)
    ));

    if !report.fairness.is_empty() {
        out.push_str("## Fairness (difference / ratio, * = within reasonable range)\n\n");
        out.push_str("| Protected trait | Demographic parity | Equalized odds | Equal opportunity |\n");
        out.push_str("|---|---|---|---|\n");
        for t in ProtectedTrait::ALL {
            let cell = |kind: FairnessMetricKind| {
                report
                    .fairness
                    .iter()
                    .find(|r| r.trait_name == t && r.metric == kind)
                    .map(|r| match (&r.undefined_reason, r.difference) {
                        (Some(reason), _) => format!("undefined ({reason})"),
                        (None, Some(d)) => {
                            let ratio = if r.ratio_infinite {
                                "inf".to_string()
                            } else {
                                fmt_opt(r.ratio)
                            };
                            let star = if r.reasonable == Some(true) { "*" } else { "" };
                            format!("{} / {}{}", fmt3(d), ratio, star)
                        }
                        _ => "-".to_string(),
                    })
                    .unwrap_or_else(|| "-".to_string())
            };
            out.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                t.as_str(),
                cell(FairnessMetricKind::DemographicParity),
                cell(FairnessMetricKind::EqualizedOdds),
                cell(FairnessMetricKind::EqualOpportunity)
            ));
        }
        out.push('\n');
    }

    if let Some(tr) = &report.transitions {
        out.push_str("## Consistency and transitions\n\n");
        out.push_str("| Category | Count | Accuracy |\n|---|---|---|\n");
        for c in super::transition::TransitionCategory::ALL {
            let o = tr.get(c);
            out.push_str(&format!(
                "| {} | {} | {} |\n",
                c.as_str(),
                o.count,
                o.accuracy().map(fmt3).unwrap_or_else(|| "-".to_string())
            ));
        }
        if tr.unclassified > 0 {
            out.push_str(&format!("| (no prior label) | {} | - |\n", tr.unclassified));
        }
        out.push('\n');
    }

    if let Some(rows) = &report.importance {
        out.push_str("## Top features\n\n| Rank | Feature | Score | Impact on GPA |\n|---|---|---|---|\n");
        for (i, row) in rows.iter().take(30).enumerate() {
            out.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                i + 1,
                row.feature,
                fmt3(row.score),
                row.impact_on_gpa
            ));
        }
        out.push('\n');
    }

    for flag in &report.leakage_flags {
        out.push_str(&format!("> leakage flag: {flag}\n"));
    }
    for note in &report.notes {
        out.push_str(&format!("> note: {note}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TraitSet;

    fn traits_all_false(ids: &[&str]) -> ProtectedTraits {
        ids.iter()
            .map(|p| {
                (
                    ParticipantId::from(*p),
                    TraitSet {
                        underrepresented_minority: false,
                        first_generation: p.ends_with('1'),
                        gender_minority: false,
                        sexual_minority: false,
                    },
                )
            })
            .collect()
    }

    fn preds(kv: &[(&str, Performance, f64)]) -> BTreeMap<ParticipantId, PredictionRow> {
        kv.iter()
            .map(|(p, label, prob)| {
                (
                    ParticipantId::from(*p),
                    PredictionRow {
                        label: *label,
                        prob_low: *prob,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn perfect_predictions_give_unit_metrics_in_report() {
        use Performance::{High, Low};
        let predictions = preds(&[("p1", High, 0.1), ("p2", Low, 0.9)]);
        let gpa: BTreeMap<ParticipantId, f64> =
            [(ParticipantId::from("p1"), 3.8), (ParticipantId::from("p2"), 2.5)].into();
        let report = evaluate(EvaluationInputs {
            approach: "lr",
            cohort: "a",
            predictions: &predictions,
            gpa_current: &gpa,
            gpa_prior: &BTreeMap::new(),
            traits: &traits_all_false(&["p1", "p2"]),
            importance: None,
            leakage_flags: vec![],
        })
        .unwrap();
        assert_eq!(report.metrics.accuracy, 1.0);
        assert_eq!(report.metrics.auc, Some(1.0));
        let md = render_summary_md(&report);
        assert!(md.contains("| 1.000 |"));
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("demographic_parity"));
    }

    #[test]
    fn participant_mismatch_is_rejected() {
        use Performance::High;
        let predictions = preds(&[("p1", High, 0.1)]);
        let gpa: BTreeMap<ParticipantId, f64> =
            [(ParticipantId::from("p1"), 3.8), (ParticipantId::from("p2"), 2.5)].into();
        let err = evaluate(EvaluationInputs {
            approach: "lr",
            cohort: "a",
            predictions: &predictions,
            gpa_current: &gpa,
            gpa_prior: &BTreeMap::new(),
            traits: &BTreeMap::new(),
            importance: None,
            leakage_flags: vec![],
        })
        .unwrap_err();
        assert!(matches!(err, EvalError::ParticipantMismatch(_)));
    }

    #[test]
    fn sealed_scoring_requires_clean_lineage() {
        use Performance::High;
        let gpa: BTreeMap<ParticipantId, f64> = [(ParticipantId::from("p1"), 3.8)].into();
        let sealed = SealedLabels::seal("cohort_b", gpa);
        let mut scored = ScoredPredictions {
            approach: "cnn".into(),
            trained_on: ["cohort_b".to_string()].into(),
            rows: preds(&[("p1", High, 0.2)]),
        };
        let err =
            generalizability_report(&scored, &sealed, &BTreeMap::new(), &traits_all_false(&["p1"]))
                .unwrap_err();
        assert!(matches!(err, EvalError::BrokenLineage(_)));
        assert_eq!(sealed.open_count(), 0);

        scored.trained_on = ["cohort_a".to_string()].into();
        let report =
            generalizability_report(&scored, &sealed, &BTreeMap::new(), &traits_all_false(&["p1"]))
                .unwrap();
        assert_eq!(report.n, 1);
        assert_eq!(sealed.open_count(), 1);
    }
}
