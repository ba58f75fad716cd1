//! Evaluation battery: classification metrics, fairness measures with the
//! reasonable-range gate, consistency/transition analysis, LR feature
//! importance aggregation, and report rendering.

mod fairness;
mod importance;
mod metrics;
mod report;
mod transition;

pub use fairness::{
    demographic_parity, equal_opportunity, equalized_odds, equalized_odds_with_mode, reasonable,
    EqOddsRatioMode, FairnessResult, FairnessUndefined, FairnessValue,
};
pub use importance::{importance_ranking, ImportanceRow, SelectedFeature};
pub use metrics::{auc_low, classification_metrics, ClassificationMetrics, ConfusionCounts};
pub use report::{
    evaluate, fairness_records, generalizability_report, render_summary_md, EvalError,
    EvaluationInputs, EvaluationReport, FairnessMetricKind, FairnessRecord, PredictionRow,
    ScoredPredictions,
};
pub use transition::{
    transition_breakdown, CategoryOutcome, TransitionBreakdown, TransitionCategory,
};

/// Capability token required to read [`crate::domain::SealedLabels`].
///
/// The private field keeps construction inside this module: training and
/// pipeline code cannot mint a permit, so sealed labels stay unreadable
/// outside the evaluator.
pub struct UnsealPermit {
    _private: (),
}

impl UnsealPermit {
    pub(super) fn new() -> Self {
        UnsealPermit { _private: () }
    }
}
