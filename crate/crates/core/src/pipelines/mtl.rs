//! The MTL approach pipeline: primary task on cohort A's current-term
//! labels, secondary task on prior-term labels pooled across both cohorts,
//! predictions emitted for cohort B whose current labels stay sealed
//! until the evaluator scores them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{ParticipantId, Performance, SealedLabels};
use crate::eval::{PredictionRow, ScoredPredictions};
use crate::learners::{
    class_index, mtl_fit, CnnConfig, FitHistory, LabelKind, MtlModel, TaskData, TrainConfig,
};
use crate::rng::substream;

use super::cnn::{duplicate_balance, stratified_split, TensorSource};
use super::PipelineError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MtlRunResult {
    pub predictions: ScoredPredictions,
    pub history_best_epoch: usize,
    pub stopped_early: bool,
    pub flags: Vec<String>,
    /// Participants of B that entered the secondary task (those with a
    /// prior GPA).
    pub secondary_b_count: usize,
}

pub struct MtlPipelineInputs<'a> {
    pub source_a: &'a TensorSource,
    pub gpa_a: &'a BTreeMap<ParticipantId, f64>,
    pub prior_a: &'a BTreeMap<ParticipantId, f64>,
    pub cohort_a_id: &'a str,
    pub source_b: &'a TensorSource,
    pub prior_b: &'a BTreeMap<ParticipantId, f64>,
    /// Cohort B's current labels; the trainer can hold this but never read
    /// it, and the evaluator checks the open count stayed zero.
    pub sealed_b: &'a SealedLabels,
}

fn prior_class(
    prior: &BTreeMap<ParticipantId, f64>,
    p: &ParticipantId,
) -> Result<Option<usize>, PipelineError> {
    match prior.get(p) {
        None => Ok(None),
        Some(g) => Ok(Some(class_index(
            crate::domain::label_from_gpa(*g).map_err(|e| PipelineError::Input(e.to_string()))?,
        ))),
    }
}

/// Train the multi-task model and emit predictions for every participant of
/// cohort B. Structural guarantees: the sealed labels are never opened
/// here, and the secondary task carries prior-term labels only.
pub fn run_mtl_pipeline(
    inputs: &MtlPipelineInputs<'_>,
    cfg: &TrainConfig,
) -> Result<MtlRunResult, PipelineError> {
    if inputs.source_a.days != inputs.source_b.days {
        return Err(PipelineError::Input("cohorts must cover the same number of days".into()));
    }
    let (aligned_a, aligned_b) = TensorSource::intersect(inputs.source_a, inputs.source_b);
    if aligned_a.features.is_empty() {
        return Err(PipelineError::Input("cohorts share no features".into()));
    }
    let inputs = MtlPipelineInputs {
        source_a: &aligned_a,
        source_b: &aligned_b,
        ..*inputs
    };
    let inputs = &inputs;
    let mut flags = Vec::new();

    // current-term labels for A
    let labels_a: Vec<usize> = inputs
        .source_a
        .participants
        .iter()
        .map(|p| {
            let g = inputs
                .gpa_a
                .get(p)
                .ok_or_else(|| PipelineError::Input(format!("no GPA for {p}")))?;
            Ok::<usize, PipelineError>(class_index(
                crate::domain::label_from_gpa(*g).map_err(|e| PipelineError::Input(e.to_string()))?,
            ))
        })
        .collect::<Result<_, _>>()?;

    // standardization over both cohorts' feature values: week-one features
    // of the evaluation cohort are legitimately available at prediction
    // time, only its current labels are sealed
    let rows_a: Vec<usize> = (0..inputs.source_a.participants.len()).collect();
    let rows_b: Vec<usize> = (0..inputs.source_b.participants.len()).collect();
    let (mean_a, _) = inputs.source_a.feature_stats(&rows_a);
    let (mean_b, _) = inputs.source_b.feature_stats(&rows_b);
    let count_a = rows_a.len().max(1) as f64;
    let count_b = rows_b.len().max(1) as f64;
    let means: Vec<f64> = mean_a
        .iter()
        .zip(&mean_b)
        .map(|(a, b)| (a * count_a + b * count_b) / (count_a + count_b))
        .collect();
    // pooled spread around the pooled mean, approximated from each side's
    // deviations; adequate for feature scaling
    let (_, std_a) = inputs.source_a.feature_stats(&rows_a);
    let (_, std_b) = inputs.source_b.feature_stats(&rows_b);
    let stds: Vec<f64> = std_a
        .iter()
        .zip(&std_b)
        .map(|(a, b)| ((a * a + b * b) / 2.0).sqrt().max(1e-12))
        .collect();

    // primary task: cohort A with a stratified hold-out for early stopping
    let mut split_rng = substream(cfg.seed, "mtl_val_split", 0);
    let (train_pos, val_pos) = stratified_split(&labels_a, 0.2, &mut split_rng);
    if train_pos.is_empty() || val_pos.is_empty() {
        return Err(PipelineError::Input("primary validation split is empty".into()));
    }
    let train_labels: Vec<usize> = train_pos.iter().map(|&i| labels_a[i]).collect();
    let mut bal_rng = substream(cfg.seed, "mtl_balance_primary", 0);
    let balanced = duplicate_balance(&train_pos, &train_labels, &mut bal_rng)?;
    let primary = TaskData {
        x: inputs.source_a.tensor(&balanced, &means, &stds),
        y: balanced.iter().map(|&i| labels_a[i]).collect(),
        label_kind: LabelKind::Current,
    };
    let val_x = inputs.source_a.tensor(&val_pos, &means, &stds);
    let val_y: Vec<usize> = val_pos.iter().map(|&i| labels_a[i]).collect();

    // secondary task: prior labels from A and B pooled
    let mut sec_rows_a = Vec::new();
    let mut sec_labels = Vec::new();
    for (i, p) in inputs.source_a.participants.iter().enumerate() {
        if let Some(c) = prior_class(inputs.prior_a, p)? {
            sec_rows_a.push(i);
            sec_labels.push(c);
        }
    }
    let mut sec_rows_b = Vec::new();
    for (i, p) in inputs.source_b.participants.iter().enumerate() {
        if let Some(c) = prior_class(inputs.prior_b, p)? {
            sec_rows_b.push(i);
            sec_labels.push(c);
        }
    }
    let secondary_b_count = sec_rows_b.len();
    if secondary_b_count == 0 {
        flags.push(
            "cohort B carries no prior-term GPA; secondary task degraded to cohort A only".to_string(),
        );
    }
    if sec_labels.iter().all(|c| *c == sec_labels[0]) {
        return Err(PipelineError::Input("secondary task labels are single-class".into()));
    }

    let ta = inputs.source_a.tensor(&sec_rows_a, &means, &stds);
    let tb = inputs.source_b.tensor(&sec_rows_b, &means, &stds);
    let mut sec_x = crate::learners::Tensor3::zeros(
        ta.n + tb.n,
        inputs.source_a.days,
        inputs.source_a.features.len(),
    );
    for i in 0..ta.n {
        sec_x.sample_mut(i).copy_from_slice(ta.sample(i));
    }
    for i in 0..tb.n {
        sec_x.sample_mut(ta.n + i).copy_from_slice(tb.sample(i));
    }
    // balance the pooled secondary set by duplication as well
    let sec_rows: Vec<usize> = (0..sec_x.n).collect();
    let mut sec_bal_rng = substream(cfg.seed, "mtl_balance_secondary", 0);
    let sec_balanced = duplicate_balance(&sec_rows, &sec_labels, &mut sec_bal_rng)?;
    let secondary = TaskData {
        x: sec_x.gather(&sec_balanced),
        y: sec_balanced.iter().map(|&i| sec_labels[i]).collect(),
        label_kind: LabelKind::Prior,
    };

    let cnn_cfg = CnnConfig::new(inputs.source_a.features.len(), inputs.source_a.days);
    let mut model = MtlModel::init(cnn_cfg, cfg.seed).map_err(PipelineError::Learner)?;
    let history: FitHistory = mtl_fit(&mut model, &primary, &secondary, (&val_x, &val_y), cfg)
        .map_err(PipelineError::Learner)?;

    // predictions for all of B through the primary head
    let xb = inputs.source_b.tensor(&rows_b, &means, &stds);
    let prob_low = model.predict_proba_low(&xb).map_err(PipelineError::Learner)?;
    let mut rows = BTreeMap::new();
    for (k, p) in inputs.source_b.participants.iter().enumerate() {
        rows.insert(
            p.clone(),
            PredictionRow {
                label: if prob_low[k] > 0.5 { Performance::Low } else { Performance::High },
                prob_low: prob_low[k],
            },
        );
    }
    debug_assert_eq!(inputs.sealed_b.open_count(), 0, "training must not unseal");

    Ok(MtlRunResult {
        predictions: ScoredPredictions {
            approach: "mtl".to_string(),
            trained_on: [inputs.cohort_a_id.to_string()].into(),
            rows,
        },
        history_best_epoch: history.best_epoch,
        stopped_early: history.stopped_early,
        flags,
        secondary_b_count,
    })
}

