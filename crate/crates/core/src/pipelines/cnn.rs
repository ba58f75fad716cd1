//! The 1D-CNN approach pipeline: daily tensors with forward/backward fill,
//! an 80/20 participant split, 5-fold leave-participants-out model
//! selection on the training split, refit, and a single test-split
//! evaluation, repeated five times with fresh seeds.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    cap_matrix_outliers, drop_all_missing, DailyFeatureMatrix, ParticipantId, Performance,
};
use crate::eval::{classification_metrics, ClassificationMetrics, PredictionRow, ScoredPredictions};
use crate::learners::{
    class_index, cnn_fit, cnn_fit_fixed, Cnn1dModel, CnnConfig, Tensor3, TrainConfig, CLASS_LOW,
};
use crate::rng::substream;

use super::PipelineError;

/// Forward-fill then backward-fill one day-ordered series in place. A
/// series with no observations stays missing (handled downstream as the
/// post-standardization zero).
pub fn ffill_bfill(series: &mut [Option<f64>]) {
    let mut last: Option<f64> = None;
    for cell in series.iter_mut() {
        match cell {
            Some(v) => last = Some(*v),
            None => *cell = last,
        }
    }
    let mut next: Option<f64> = None;
    for cell in series.iter_mut().rev() {
        match cell {
            Some(v) => next = Some(*v),
            None => *cell = next,
        }
    }
}

/// Daily tensor source: cleaned matrix with per-participant fill applied.
#[derive(Debug, Clone)]
pub struct TensorSource {
    pub participants: Vec<ParticipantId>,
    pub features: Vec<String>,
    pub days: usize,
    /// `values[participant][day][feature]`, `None` only for fully-missing
    /// series.
    values: Vec<Vec<Vec<Option<f64>>>>,
}

impl TensorSource {
    /// Common cleaning plus forward/backward fill over days.
    pub fn build(daily: &DailyFeatureMatrix) -> Self {
        let mut cleaned = daily.clone();
        cap_matrix_outliers(&mut cleaned);
        let cleaned = drop_all_missing(&cleaned);
        let (n_p, n_d, n_f) = (cleaned.n_participants(), cleaned.n_days(), cleaned.n_features());
        let mut values = vec![vec![vec![None; n_f]; n_d]; n_p];
        for p in 0..n_p {
            for f in 0..n_f {
                let mut series = cleaned.series(p, f);
                ffill_bfill(&mut series);
                for (d, v) in series.into_iter().enumerate() {
                    values[p][d][f] = v;
                }
            }
        }
        TensorSource {
            participants: cleaned.participants().to_vec(),
            features: cleaned.features().to_vec(),
            days: n_d,
            values,
        }
    }

    /// New source keeping only the named features, in the given order.
    pub fn restrict(&self, keep: &[String]) -> TensorSource {
        let idx: Vec<usize> = keep
            .iter()
            .filter_map(|k| self.features.iter().position(|f| f == k))
            .collect();
        TensorSource {
            participants: self.participants.clone(),
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            days: self.days,
            values: self
                .values
                .iter()
                .map(|p| {
                    p.iter()
                        .map(|d| idx.iter().map(|&i| d[i]).collect())
                        .collect()
                })
                .collect(),
        }
    }

    /// Restrict both sources to their common features so cross-cohort
    /// models see one universe.
    pub fn intersect(a: &TensorSource, b: &TensorSource) -> (TensorSource, TensorSource) {
        let common: Vec<String> = a
            .features
            .iter()
            .filter(|f| b.features.contains(f))
            .cloned()
            .collect();
        (a.restrict(&common), b.restrict(&common))
    }

    /// Per-feature mean/std over the given participants' day cells.
    pub fn feature_stats(&self, participant_rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let n_f = self.features.len();
        let mut sum = vec![0.0; n_f];
        let mut count = vec![0usize; n_f];
        for &p in participant_rows {
            for d in 0..self.days {
                for f in 0..n_f {
                    if let Some(v) = self.values[p][d][f] {
                        sum[f] += v;
                        count[f] += 1;
                    }
                }
            }
        }
        let means: Vec<f64> = (0..n_f)
            .map(|f| if count[f] > 0 { sum[f] / count[f] as f64 } else { 0.0 })
            .collect();
        let mut ss = vec![0.0; n_f];
        for &p in participant_rows {
            for d in 0..self.days {
                for f in 0..n_f {
                    if let Some(v) = self.values[p][d][f] {
                        ss[f] += (v - means[f]) * (v - means[f]);
                    }
                }
            }
        }
        let stds: Vec<f64> = (0..n_f)
            .map(|f| {
                if count[f] > 1 {
                    let s = (ss[f] / (count[f] - 1) as f64).sqrt();
                    if s > 1e-12 {
                        s
                    } else {
                        1.0
                    }
                } else {
                    1.0
                }
            })
            .collect();
        (means, stds)
    }

    /// Standardized `[rows x days x features]` tensor for the given
    /// participants; a missing series reads as zero, the feature mean.
    pub fn tensor(&self, participant_rows: &[usize], means: &[f64], stds: &[f64]) -> Tensor3 {
        let n_f = self.features.len();
        let mut t = Tensor3::zeros(participant_rows.len(), self.days, n_f);
        for (k, &p) in participant_rows.iter().enumerate() {
            let sample = t.sample_mut(k);
            for d in 0..self.days {
                for f in 0..n_f {
                    sample[d * n_f + f] = match self.values[p][d][f] {
                        Some(v) => (v - means[f]) / stds[f],
                        None => 0.0,
                    };
                }
            }
        }
        t
    }
}

/// Duplicate minority-class sample indices uniformly at random until the
/// classes are exactly 1:1. Returns the augmented index list.
pub fn duplicate_balance(
    rows: &[usize],
    labels: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, PipelineError> {
    assert_eq!(rows.len(), labels.len());
    let n_low = labels.iter().filter(|l| **l == CLASS_LOW).count();
    let n_high = labels.len() - n_low;
    if n_low == 0 || n_high == 0 {
        return Err(PipelineError::Input("both classes required for balancing".into()));
    }
    let minority: Vec<usize> = (0..rows.len())
        .filter(|&i| (labels[i] == CLASS_LOW) == (n_low < n_high))
        .collect();
    let mut out: Vec<usize> = (0..rows.len()).collect();
    for _ in 0..n_low.abs_diff(n_high) {
        out.push(minority[rng.gen_range(0..minority.len())]);
    }
    Ok(out.into_iter().map(|i| rows[i]).collect())
}

/// Stratified split of participant rows into train/test by label.
pub fn stratified_split(
    labels: &[usize],
    test_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [0usize, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        let n_test = ((members.len() as f64) * test_fraction).round() as usize;
        test.extend(members.iter().take(n_test));
        train.extend(members.iter().skip(n_test));
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Stratified k-fold partition of rows (by position).
pub fn stratified_folds(labels: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in [0usize, 1] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        for (j, i) in members.into_iter().enumerate() {
            folds[j % k].push(i);
        }
    }
    for fold in folds.iter_mut() {
        fold.sort_unstable();
    }
    folds
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub chosen_epochs: usize,
    pub fold_best_epochs: Vec<usize>,
    pub test_participants: Vec<ParticipantId>,
    pub predictions: BTreeMap<ParticipantId, PredictionRow>,
    pub metrics: ClassificationMetrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CnnRunResult {
    pub repeats: Vec<RepeatResult>,
    pub mean_auc: Option<f64>,
    pub mean_balanced_accuracy: f64,
    /// Predictions pooled over every repeat's test split (participants may
    /// repeat across repeats; the last repeat wins in the map).
    pub predictions: ScoredPredictions,
}

pub struct CnnPipelineInputs<'a> {
    pub source: &'a TensorSource,
    pub gpa: &'a BTreeMap<ParticipantId, f64>,
    pub cohort_id: &'a str,
}

fn labels_for(source: &TensorSource, gpa: &BTreeMap<ParticipantId, f64>) -> Result<Vec<usize>, PipelineError> {
    source
        .participants
        .iter()
        .map(|p| {
            let g = gpa
                .get(p)
                .ok_or_else(|| PipelineError::Input(format!("no GPA for {p}")))?;
            Ok(class_index(
                crate::domain::label_from_gpa(*g).map_err(|e| PipelineError::Input(e.to_string()))?,
            ))
        })
        .collect()
}

/// One repeat of the full CNN protocol. Model selection uses only the
/// training split: each LOPO fold early-stops on its own validation
/// participants, the median best epoch becomes the refit budget, the refit
/// model is evaluated once on the untouched 20% test split.
fn run_cnn_repeat(
    inputs: &CnnPipelineInputs<'_>,
    labels: &[usize],
    cfg: &TrainConfig,
    cnn_cfg: CnnConfig,
    repeat: usize,
) -> Result<RepeatResult, PipelineError> {
    let seed = cfg.seed.wrapping_add(repeat as u64);
    let mut split_rng = substream(seed, "cnn_split", repeat as u64);
    let (train_rows, test_rows) = stratified_split(labels, 0.2, &mut split_rng);
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(PipelineError::Input("split produced an empty side".into()));
    }

    // training statistics only: the test split never contributes
    let (means, stds) = inputs.source.feature_stats(&train_rows);

    let train_labels: Vec<usize> = train_rows.iter().map(|&i| labels[i]).collect();
    let mut fold_rng = substream(seed, "cnn_folds", repeat as u64);
    let folds = stratified_folds(&train_labels, 5, &mut fold_rng);

    let fold_best: Vec<usize> = folds
        .par_iter()
        .enumerate()
        .map(|(fi, val_pos)| -> Result<usize, PipelineError> {
            let val_rows: Vec<usize> = val_pos.iter().map(|&p| train_rows[p]).collect();
            let fit_rows: Vec<usize> = train_rows
                .iter()
                .copied()
                .filter(|r| !val_rows.contains(r))
                .collect();
            let fit_labels: Vec<usize> = fit_rows.iter().map(|&i| labels[i]).collect();
            let mut bal_rng = substream(seed, "cnn_balance", fi as u64);
            let balanced = duplicate_balance(&fit_rows, &fit_labels, &mut bal_rng)?;
            let bx = inputs.source.tensor(&balanced, &means, &stds);
            let by: Vec<usize> = balanced.iter().map(|&i| labels[i]).collect();
            let vx = inputs.source.tensor(&val_rows, &means, &stds);
            let vy: Vec<usize> = val_rows.iter().map(|&i| labels[i]).collect();
            let mut model = Cnn1dModel::init(cnn_cfg, seed.wrapping_add(fi as u64))
                .map_err(PipelineError::Learner)?;
            let fold_cfg = TrainConfig {
                seed: seed.wrapping_add(fi as u64),
                ..*cfg
            };
            let history =
                cnn_fit(&mut model, &bx, &by, &vx, &vy, &fold_cfg).map_err(PipelineError::Learner)?;
            Ok(history.best_epoch)
        })
        .collect::<Result<_, _>>()?;

    let mut sorted = fold_best.clone();
    sorted.sort_unstable();
    let chosen_epochs = sorted[sorted.len() / 2] + 1;

    // refit on the full (balanced) training split for the chosen budget
    let mut bal_rng = substream(seed, "cnn_balance_refit", 0);
    let balanced = duplicate_balance(&train_rows, &train_labels, &mut bal_rng)?;
    let bx = inputs.source.tensor(&balanced, &means, &stds);
    let by: Vec<usize> = balanced.iter().map(|&i| labels[i]).collect();
    let mut model = Cnn1dModel::init(cnn_cfg, seed).map_err(PipelineError::Learner)?;
    let refit_cfg = TrainConfig { seed, ..*cfg };
    cnn_fit_fixed(&mut model, &bx, &by, chosen_epochs, &refit_cfg).map_err(PipelineError::Learner)?;

    // one-shot evaluation on the held-out 20%
    let tx = inputs.source.tensor(&test_rows, &means, &stds);
    let prob_low = model.predict_proba_low(&tx).map_err(PipelineError::Learner)?;
    let mut predictions = BTreeMap::new();
    let mut y_true = Vec::new();
    let mut y_pred = Vec::new();
    for (k, &row) in test_rows.iter().enumerate() {
        let p = inputs.source.participants[row].clone();
        let label = if prob_low[k] > 0.5 { Performance::Low } else { Performance::High };
        y_pred.push(label);
        y_true.push(if labels[row] == CLASS_LOW { Performance::Low } else { Performance::High });
        predictions.insert(
            p,
            PredictionRow {
                label,
                prob_low: prob_low[k],
            },
        );
    }
    let metrics = classification_metrics(&y_true, &y_pred, Some(&prob_low));

    Ok(RepeatResult {
        repeat,
        seed,
        chosen_epochs,
        fold_best_epochs: fold_best,
        test_participants: test_rows
            .iter()
            .map(|&r| inputs.source.participants[r].clone())
            .collect(),
        predictions,
        metrics,
    })
}

/// Train one CNN on a whole cohort: stratified 80/20 early-stop split,
/// duplication balancing, cohort-wide feature statistics. Returns the model
/// plus the statistics needed to standardize new data for it.
pub fn fit_cnn_full(
    source: &TensorSource,
    gpa: &BTreeMap<ParticipantId, f64>,
    cfg: &TrainConfig,
) -> Result<(Cnn1dModel, crate::learners::FitHistory, Vec<f64>, Vec<f64>), PipelineError> {
    let labels = labels_for(source, gpa)?;
    let rows: Vec<usize> = (0..source.participants.len()).collect();
    let (means, stds) = source.feature_stats(&rows);

    let mut split_rng = substream(cfg.seed, "cnn_transfer_split", 0);
    let (train_rows, val_rows) = stratified_split(&labels, 0.2, &mut split_rng);
    let train_labels: Vec<usize> = train_rows.iter().map(|&i| labels[i]).collect();
    let mut bal_rng = substream(cfg.seed, "cnn_transfer_balance", 0);
    let balanced = duplicate_balance(&train_rows, &train_labels, &mut bal_rng)?;

    let bx = source.tensor(&balanced, &means, &stds);
    let by: Vec<usize> = balanced.iter().map(|&i| labels[i]).collect();
    let vx = source.tensor(&val_rows, &means, &stds);
    let vy: Vec<usize> = val_rows.iter().map(|&i| labels[i]).collect();

    let cnn_cfg = CnnConfig::new(source.features.len(), source.days);
    let mut model = Cnn1dModel::init(cnn_cfg, cfg.seed).map_err(PipelineError::Learner)?;
    let history = cnn_fit(&mut model, &bx, &by, &vx, &vy, cfg).map_err(PipelineError::Learner)?;
    Ok((model, history, means, stds))
}

/// Model-level generalizability: train on cohort A (stratified 80/20
/// early-stop split, duplication balancing, A-only feature statistics) and
/// score every participant of an unseen cohort B.
pub fn run_cnn_transfer(
    source_a: &TensorSource,
    gpa_a: &BTreeMap<ParticipantId, f64>,
    cohort_a_id: &str,
    source_b: &TensorSource,
    cfg: &TrainConfig,
) -> Result<ScoredPredictions, PipelineError> {
    if source_a.days != source_b.days {
        return Err(PipelineError::Input("cohorts must cover the same number of days".into()));
    }
    let (source_a, source_b) = TensorSource::intersect(source_a, source_b);
    if source_a.features.is_empty() {
        return Err(PipelineError::Input("cohorts share no features".into()));
    }
    let (model, _, means, stds) = fit_cnn_full(&source_a, gpa_a, cfg)?;

    let rows_b: Vec<usize> = (0..source_b.participants.len()).collect();
    let xb = source_b.tensor(&rows_b, &means, &stds);
    let prob_low = model.predict_proba_low(&xb).map_err(PipelineError::Learner)?;
    let mut rows = BTreeMap::new();
    for (k, p) in source_b.participants.iter().enumerate() {
        rows.insert(
            p.clone(),
            PredictionRow {
                label: if prob_low[k] > 0.5 { Performance::Low } else { Performance::High },
                prob_low: prob_low[k],
            },
        );
    }
    Ok(ScoredPredictions {
        approach: "cnn".to_string(),
        trained_on: [cohort_a_id.to_string()].into(),
        rows,
    })
}

/// The full protocol: five repeats with distinct seeds, mean metrics
/// reported.
pub fn run_cnn_pipeline(
    inputs: &CnnPipelineInputs<'_>,
    cfg: &TrainConfig,
    n_repeats: usize,
) -> Result<CnnRunResult, PipelineError> {
    let labels = labels_for(inputs.source, inputs.gpa)?;
    if inputs.source.days < 3 {
        return Err(PipelineError::Input("daily tensor needs at least 3 days".into()));
    }
    let cnn_cfg = CnnConfig::new(inputs.source.features.len(), inputs.source.days);

    let repeats: Vec<RepeatResult> = (0..n_repeats)
        .map(|r| run_cnn_repeat(inputs, &labels, cfg, cnn_cfg, r))
        .collect::<Result<_, _>>()?;

    let aucs: Vec<f64> = repeats.iter().filter_map(|r| r.metrics.auc).collect();
    let mean_auc = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);
    let mean_balanced_accuracy =
        repeats.iter().map(|r| r.metrics.balanced_accuracy).sum::<f64>() / repeats.len().max(1) as f64;

    let mut pooled = BTreeMap::new();
    for r in &repeats {
        for (p, row) in &r.predictions {
            pooled.insert(p.clone(), *row);
        }
    }
    Ok(CnnRunResult {
        repeats,
        mean_auc,
        mean_balanced_accuracy,
        predictions: ScoredPredictions {
            approach: "cnn".to_string(),
            trained_on: [inputs.cohort_id.to_string()].into(),
            rows: pooled,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ffill_then_bfill_trace() {
        let mut s = vec![None, Some(2.0), None, Some(4.0)];
        ffill_bfill(&mut s);
        assert_eq!(s, vec![Some(2.0), Some(2.0), Some(2.0), Some(4.0)]);

        let mut no_missing = vec![Some(1.0), Some(2.0)];
        ffill_bfill(&mut no_missing);
        assert_eq!(no_missing, vec![Some(1.0), Some(2.0)]);

        let mut all_missing: Vec<Option<f64>> = vec![None, None];
        ffill_bfill(&mut all_missing);
        assert_eq!(all_missing, vec![None, None]);
    }

    #[test]
    fn duplicate_balance_equalizes_with_copies() {
        let rows: Vec<usize> = (0..120).collect();
        let labels: Vec<usize> = (0..120).map(|i| usize::from(i < 30)).collect();
        let mut rng = substream(5, "dup", 0);
        let balanced = duplicate_balance(&rows, &labels[..], &mut rng).unwrap();
        let lows = balanced.iter().filter(|&&r| r < 30).count();
        let highs = balanced.len() - lows;
        assert_eq!(lows, highs);
        assert_eq!(lows, 90);
        // duplicates are exact copies of existing minority rows
        assert!(balanced.iter().all(|&r| r < 120));
        // deterministic
        let mut rng2 = substream(5, "dup", 0);
        assert_eq!(balanced, duplicate_balance(&rows, &labels[..], &mut rng2).unwrap());
    }

    #[test]
    fn stratified_split_and_folds_partition() {
        let labels: Vec<usize> = (0..50).map(|i| usize::from(i % 5 == 0)).collect();
        let mut rng = substream(2, "split", 0);
        let (train, test) = stratified_split(&labels, 0.2, &mut rng);
        assert_eq!(train.len() + test.len(), 50);
        let n_low_test = test.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(n_low_test, 2); // 10 lows x 0.2

        let folds = stratified_folds(&labels, 5, &mut rng);
        let total: usize = folds.iter().map(Vec::len).sum();
        assert_eq!(total, 50);
        let mut seen: Vec<usize> = folds.concat();
        seen.sort_unstable();
        assert_eq!(seen, (0..50).collect::<Vec<_>>());
    }
}
