//! The LR approach pipeline: leave-one-subject-out cross-validation with
//! per-fold training-mean imputation, standardization, SMOTE, collinearity
//! pruning, and correlation-based feature selection, then an L2 logistic
//! fit per fold.
//!
//! The CFS stage scores its cutoff grid by the held-out accuracy advantage,
//! reproducing the original procedure's deliberate test leakage; every run
//! carries a leakage flag saying so.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::domain::{ParticipantId, Performance};
use crate::eval::{importance_ranking, ImportanceRow, PredictionRow, ScoredPredictions, SelectedFeature};
use crate::learners::{lr_fit, LogisticModel, LrConfig};
use crate::rng::substream;

use super::tabular::WeeklyMatrix;
use super::PipelineError;

pub const CFS_LEAKAGE_FLAG: &str =
    "cfs_select scores its cutoff grid on held-out accuracy (deliberate, matching the original procedure)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrTarget {
    /// Correlate candidate features against the continuous end-of-term GPA.
    ContinuousGpa,
    /// Correlate against the binary label instead.
    BinaryLabel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LrPipelineConfig {
    pub cfs_grid: Vec<f64>,
    pub alpha: f64,
    pub collinearity_cutoff: f64,
    pub smote_k: usize,
    pub corr_target: CorrTarget,
    pub seed: u64,
    pub lr: LrConfig,
    /// Iteration budget for the grid-scoring fits inside CFS.
    pub cfs_lr_max_iter: usize,
}

impl Default for LrPipelineConfig {
    fn default() -> Self {
        Self {
            cfs_grid: (1..=10).map(|i| i as f64 * 0.05).collect(),
            alpha: 0.05,
            collinearity_cutoff: 0.7,
            smote_k: 5,
            corr_target: CorrTarget::ContinuousGpa,
            seed: 0,
            lr: LrConfig::default(),
            cfs_lr_max_iter: 200,
        }
    }
}

/// Fill missing cells of every column with its training mean; a column with
/// no observed training cell is filled with the sentinel 999 everywhere.
/// Test columns receive the training fill values, never their own. Returns
/// (train columns, test columns, imputation vector).
pub fn impute_train_mean(
    train: &[Vec<Option<f64>>],
    test: &[Vec<Option<f64>>],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let mut fills = Vec::with_capacity(train.len());
    let mut train_out = Vec::with_capacity(train.len());
    let mut test_out = Vec::with_capacity(test.len());
    for col in train {
        let observed: Vec<f64> = col.iter().flatten().copied().collect();
        let fill = if observed.is_empty() {
            999.0
        } else {
            observed.iter().sum::<f64>() / observed.len() as f64
        };
        fills.push(fill);
        train_out.push(col.iter().map(|c| c.unwrap_or(fill)).collect());
    }
    for (col, fill) in test.iter().zip(&fills) {
        test_out.push(col.iter().map(|c| c.unwrap_or(*fill)).collect());
    }
    (train_out, test_out, fills)
}

/// Standardize columns with training statistics; a zero-spread column keeps
/// unit divisor so constant features map to zero.
pub fn standardize_columns(
    train: &mut [Vec<f64>],
    test: &mut [Vec<f64>],
) -> (Vec<f64>, Vec<f64>) {
    let mut means = Vec::with_capacity(train.len());
    let mut stds = Vec::with_capacity(train.len());
    for (c, col) in train.iter_mut().enumerate() {
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        for v in col.iter_mut() {
            *v = (*v - mean) / std;
        }
        for v in test[c].iter_mut() {
            *v = (*v - mean) / std;
        }
        means.push(mean);
        stds.push(std);
    }
    (means, stds)
}

/// SMOTE: oversample the minority class to an exact 1:1 ratio by uniform
/// interpolation between a minority sample and one of its k nearest
/// minority neighbors. Deterministic under the rng.
pub fn smote(
    rows: &[Vec<f64>],
    y: &[u8],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Vec<f64>>, Vec<u8>), PipelineError> {
    assert_eq!(rows.len(), y.len());
    let n_pos = y.iter().filter(|v| **v == 1).count();
    let n_neg = y.len() - n_pos;
    if n_pos == n_neg {
        return Ok((rows.to_vec(), y.to_vec()));
    }
    let minority_label: u8 = if n_pos < n_neg { 1 } else { 0 };
    let minority: Vec<usize> = (0..y.len()).filter(|&i| y[i] == minority_label).collect();
    if minority.len() < 2 {
        return Err(PipelineError::Smote(
            "minority class needs at least 2 samples for interpolation".into(),
        ));
    }
    let needed = n_pos.abs_diff(n_neg);
    let k = k.min(minority.len() - 1).max(1);

    // k nearest minority neighbors per minority sample
    let mut neighbors: Vec<Vec<usize>> = Vec::with_capacity(minority.len());
    for (a, &i) in minority.iter().enumerate() {
        let mut dist: Vec<(f64, usize)> = minority
            .iter()
            .enumerate()
            .filter(|(b, _)| *b != a)
            .map(|(b, &j)| {
                let d: f64 = rows[i]
                    .iter()
                    .zip(&rows[j])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                (d, b)
            })
            .collect();
        dist.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite distances").then(x.1.cmp(&y.1)));
        neighbors.push(dist.into_iter().take(k).map(|(_, b)| b).collect());
    }

    let mut out_rows = rows.to_vec();
    let mut out_y = y.to_vec();
    for _ in 0..needed {
        let a = rng.gen_range(0..minority.len());
        let b = neighbors[a][rng.gen_range(0..neighbors[a].len())];
        let gap: f64 = rng.gen();
        let (ri, rj) = (&rows[minority[a]], &rows[minority[b]]);
        out_rows.push(
            ri.iter()
                .zip(rj)
                .map(|(x, y)| x + gap * (y - x))
                .collect(),
        );
        out_y.push(minority_label);
    }
    Ok((out_rows, out_y))
}

/// Greedy collinearity pruning in column order: drop any column correlating
/// above the cutoff (strictly) with an already-retained one. Constant
/// columns correlate with nothing. Returns retained column indices.
pub fn prune_collinear(columns: &[Vec<f64>], cutoff: f64) -> Vec<usize> {
    let normalized: Vec<Option<Vec<f64>>> = columns
        .iter()
        .map(|col| {
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            if ss.sqrt() < 1e-12 {
                None
            } else {
                let inv = 1.0 / ss.sqrt();
                Some(col.iter().map(|v| (v - mean) * inv).collect())
            }
        })
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    for (c, z) in normalized.iter().enumerate() {
        let collides = match z {
            None => false,
            Some(zc) => kept.iter().any(|&kc| match &normalized[kc] {
                Some(zk) => {
                    let r: f64 = zc.iter().zip(zk).map(|(a, b)| a * b).sum();
                    r.abs() > cutoff
                }
                None => false,
            }),
        };
        if !collides {
            kept.push(c);
        }
    }
    kept
}

/// Pearson correlation of a column against a target plus its two-sided
/// p-value from the t distribution.
pub fn corr_with_p(column: &[f64], target: &[f64]) -> (f64, f64) {
    let n = column.len() as f64;
    if n < 3.0 {
        return (0.0, 1.0);
    }
    let mx = column.iter().sum::<f64>() / n;
    let my = target.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in column.iter().zip(target) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 1e-24 || syy <= 1e-24 {
        return (0.0, 1.0);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    if r.abs() >= 1.0 {
        return (r, 0.0);
    }
    let t = r * ((n - 2.0) / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 2.0).expect("valid dof");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    (r, p)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CfsOutcome {
    pub selected: Vec<usize>,
    pub chosen_r: f64,
    pub fallback: bool,
    pub n_candidates: usize,
}

/// Everything the CFS stage reads. `real_cols` are the standardized
/// pre-oversampling training columns the correlations are computed on;
/// `fit_*` is the balanced training set the grid fits use.
pub struct CfsInputs<'a> {
    pub real_cols: &'a [Vec<f64>],
    pub corr_target: &'a [f64],
    pub kept: &'a [usize],
    pub fit_rows: &'a [Vec<f64>],
    pub fit_y: &'a [u8],
    pub test_rows: &'a [Vec<f64>],
    pub test_y: &'a [u8],
}

fn gather(rows: &[Vec<f64>], cols: &[usize]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect()
}

fn accuracy(model: &LogisticModel, x: &[Vec<f64>], y: &[u8]) -> f64 {
    let preds = model.predict(x).expect("dims match");
    let correct = preds
        .iter()
        .zip(y)
        .filter(|(p, t)| (**p == Performance::Low) == (**t == 1))
        .count();
    correct as f64 / y.len().max(1) as f64
}

/// Correlation-based feature selection with a grid search over the cutoff
/// r, scored by the accuracy advantage a_test - a_train (ties prefer the
/// smaller r). An empty candidate set falls back to the ten strongest
/// correlations. The test dependence is deliberate and flagged on every
/// run.
pub fn cfs_select(inputs: CfsInputs<'_>, config: &LrPipelineConfig) -> CfsOutcome {
    let corrs: BTreeMap<usize, (f64, f64)> = inputs
        .kept
        .iter()
        .map(|&c| (c, corr_with_p(&inputs.real_cols[c], inputs.corr_target)))
        .collect();
    let candidates: Vec<usize> = inputs
        .kept
        .iter()
        .copied()
        .filter(|c| corrs[c].1 < config.alpha)
        .collect();

    let fallback = |reason: bool| -> CfsOutcome {
        let mut by_corr: Vec<usize> = inputs.kept.to_vec();
        by_corr.sort_by(|a, b| {
            corrs[b]
                .0
                .abs()
                .partial_cmp(&corrs[a].0.abs())
                .expect("finite corr")
                .then(a.cmp(b))
        });
        CfsOutcome {
            selected: by_corr.into_iter().take(10).collect(),
            chosen_r: 0.0,
            fallback: reason,
            n_candidates: candidates.len(),
        }
    };

    if candidates.is_empty() {
        return fallback(true);
    }

    let fit_cfg = LrConfig {
        max_iter: config.cfs_lr_max_iter,
        ..config.lr
    };
    let mut best: Option<(f64, f64, Vec<usize>)> = None; // (a_diff, r, selection)
    for &r in &config.cfs_grid {
        let selection: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|c| corrs[c].0.abs() >= r)
            .collect();
        if selection.is_empty() {
            continue;
        }
        let train_x = gather(inputs.fit_rows, &selection);
        let Ok(model) = lr_fit(&train_x, inputs.fit_y, fit_cfg) else {
            continue;
        };
        let a_train = accuracy(&model, &train_x, inputs.fit_y);
        let a_test = accuracy(&model, &gather(inputs.test_rows, &selection), inputs.test_y);
        let a_diff = a_test - a_train;
        let better = match &best {
            None => true,
            Some((best_diff, ..)) => a_diff > *best_diff,
        };
        if better {
            best = Some((a_diff, r, selection));
        }
    }
    match best {
        Some((_, r, selected)) => CfsOutcome {
            selected,
            chosen_r: r,
            fallback: false,
            n_candidates: candidates.len(),
        },
        None => fallback(true),
    }
}

/// Per-fold training statistics, exposed so leakage tests can assert they
/// are untouched by held-out data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldStats {
    pub imputation: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub kept: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold_id: usize,
    pub held_out: Vec<ParticipantId>,
    pub predictions: BTreeMap<ParticipantId, PredictionRow>,
    pub selected: Vec<SelectedFeature>,
    pub chosen_r: f64,
    pub cfs_fallback: bool,
    pub stats: FoldStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LrRunResult {
    pub folds: Vec<FoldResult>,
    pub predictions: ScoredPredictions,
    pub importance: Vec<ImportanceRow>,
    pub leakage_flags: Vec<String>,
}

/// Run one LOSO fold (held-out participant by row index).
pub fn run_lr_fold(
    matrix: &WeeklyMatrix,
    gpa: &BTreeMap<ParticipantId, f64>,
    config: &LrPipelineConfig,
    held_out: usize,
) -> Result<FoldResult, PipelineError> {
    let n = matrix.participants.len();
    // canonical (sorted-id) training order, so results are invariant to the
    // caller's row ordering
    let mut train_idx: Vec<usize> = (0..n).filter(|i| *i != held_out).collect();
    train_idx.sort_by(|&a, &b| matrix.participants[a].cmp(&matrix.participants[b]));
    let test_idx = [held_out];

    let label_of = |i: usize| -> Result<u8, PipelineError> {
        let p = &matrix.participants[i];
        let g = gpa
            .get(p)
            .ok_or_else(|| PipelineError::Input(format!("no GPA for {p}")))?;
        Ok(u8::from(
            crate::domain::label_from_gpa(*g).map_err(|e| PipelineError::Input(e.to_string()))?
                == Performance::Low,
        ))
    };
    let y_train: Vec<u8> = train_idx.iter().map(|&i| label_of(i)).collect::<Result<_, _>>()?;
    let y_test: Vec<u8> = test_idx.iter().map(|&i| label_of(i)).collect::<Result<_, _>>()?;

    let n_cols = matrix.columns.len();
    let col_view = |idx: &[usize]| -> Vec<Vec<Option<f64>>> {
        (0..n_cols)
            .map(|c| idx.iter().map(|&i| matrix.rows[i][c]).collect())
            .collect()
    };
    let (mut train_cols, mut test_cols, imputation) =
        impute_train_mean(&col_view(&train_idx), &col_view(&test_idx));
    let (means, stds) = standardize_columns(&mut train_cols, &mut test_cols);

    // row views
    let to_rows = |cols: &[Vec<f64>], n_rows: usize| -> Vec<Vec<f64>> {
        (0..n_rows)
            .map(|r| cols.iter().map(|c| c[r]).collect())
            .collect()
    };
    let real_rows = to_rows(&train_cols, train_idx.len());
    let test_rows = to_rows(&test_cols, test_idx.len());

    // keyed by identity so fold results are invariant to row order
    let smote_key = format!("smote:{}", matrix.participants[held_out]);
    let mut smote_rng = substream(config.seed, &smote_key, 0);
    let (fit_rows, fit_y) = smote(&real_rows, &y_train, config.smote_k, &mut smote_rng)?;

    // pruning runs on the balanced training matrix
    let fit_cols: Vec<Vec<f64>> = (0..n_cols)
        .map(|c| fit_rows.iter().map(|r| r[c]).collect())
        .collect();
    let kept = prune_collinear(&fit_cols, config.collinearity_cutoff);

    let corr_target: Vec<f64> = match config.corr_target {
        CorrTarget::ContinuousGpa => train_idx
            .iter()
            .map(|&i| gpa[&matrix.participants[i]])
            .collect(),
        CorrTarget::BinaryLabel => y_train.iter().map(|v| *v as f64).collect(),
    };
    let cfs = cfs_select(
        CfsInputs {
            real_cols: &train_cols,
            corr_target: &corr_target,
            kept: &kept,
            fit_rows: &fit_rows,
            fit_y: &fit_y,
            test_rows: &test_rows,
            test_y: &y_test,
        },
        config,
    );

    let final_x = gather(&fit_rows, &cfs.selected);
    let model = lr_fit(&final_x, &fit_y, config.lr).map_err(PipelineError::Learner)?;

    let test_x = gather(&test_rows, &cfs.selected);
    let probs = model.predict_proba(&test_x).map_err(PipelineError::Learner)?;
    let mut predictions = BTreeMap::new();
    for (&i, prob_low) in test_idx.iter().zip(&probs) {
        predictions.insert(
            matrix.participants[i].clone(),
            PredictionRow {
                label: if *prob_low > 0.5 { Performance::Low } else { Performance::High },
                prob_low: *prob_low,
            },
        );
    }

    let selected: Vec<SelectedFeature> = cfs
        .selected
        .iter()
        .zip(&model.weights)
        .map(|(&c, &w)| SelectedFeature {
            name: matrix.columns[c].clone(),
            coefficient: w,
        })
        .collect();

    Ok(FoldResult {
        fold_id: held_out,
        held_out: vec![matrix.participants[held_out].clone()],
        predictions,
        selected,
        chosen_r: cfs.chosen_r,
        cfs_fallback: cfs.fallback,
        stats: FoldStats {
            imputation,
            means,
            stds,
            kept,
        },
    })
}

/// Leave-one-subject-out over the whole cohort. Folds run in parallel;
/// results are keyed by participant so aggregation is order-independent.
pub fn run_lr_pipeline(
    matrix: &WeeklyMatrix,
    gpa: &BTreeMap<ParticipantId, f64>,
    config: &LrPipelineConfig,
) -> Result<LrRunResult, PipelineError> {
    let n = matrix.participants.len();
    if n < 3 {
        return Err(PipelineError::Input("LOSO needs at least 3 participants".into()));
    }
    let mut folds: Vec<FoldResult> = (0..n)
        .into_par_iter()
        .map(|i| run_lr_fold(matrix, gpa, config, i))
        .collect::<Result<_, _>>()?;
    folds.sort_by_key(|f| f.fold_id);

    let mut predictions = BTreeMap::new();
    for fold in &folds {
        for (p, row) in &fold.predictions {
            let duplicate = predictions.insert(p.clone(), *row);
            debug_assert!(duplicate.is_none(), "participant predicted twice");
        }
    }
    let covered: BTreeSet<&ParticipantId> = predictions.keys().collect();
    if covered.len() != n {
        return Err(PipelineError::Input("LOSO fold coverage is not a partition".into()));
    }

    let per_fold: Vec<Vec<SelectedFeature>> = folds.iter().map(|f| f.selected.clone()).collect();
    let importance = importance_ranking(&per_fold);

    Ok(LrRunResult {
        folds,
        predictions: ScoredPredictions {
            approach: "lr".to_string(),
            trained_on: [gpa_cohort_tag(matrix)].into(),
            rows: predictions,
        },
        importance,
        leakage_flags: vec![CFS_LEAKAGE_FLAG.to_string()],
    })
}

/// Model-level generalizability for the LR approach: preprocess and select
/// features on cohort A alone (CFS scored on an internal stratified
/// hold-out), fit once, and score every row of the unseen cohort B. The two
/// matrices are aligned on their common column names.
pub fn run_lr_transfer(
    matrix_a: &WeeklyMatrix,
    gpa_a: &BTreeMap<ParticipantId, f64>,
    cohort_a_id: &str,
    matrix_b: &WeeklyMatrix,
    config: &LrPipelineConfig,
) -> Result<ScoredPredictions, PipelineError> {
    let common: Vec<String> = matrix_a
        .columns
        .iter()
        .filter(|c| matrix_b.columns.contains(c))
        .cloned()
        .collect();
    if common.is_empty() {
        return Err(PipelineError::Input("cohorts share no feature columns".into()));
    }
    let pos_a: Vec<usize> = common.iter().map(|c| matrix_a.column_pos(c).expect("common")).collect();
    let pos_b: Vec<usize> = common.iter().map(|c| matrix_b.column_pos(c).expect("common")).collect();

    let n_a = matrix_a.participants.len();
    let y_all: Vec<u8> = matrix_a
        .participants
        .iter()
        .map(|p| {
            let g = gpa_a
                .get(p)
                .ok_or_else(|| PipelineError::Input(format!("no GPA for {p}")))?;
            Ok::<u8, PipelineError>(u8::from(
                crate::domain::label_from_gpa(*g).map_err(|e| PipelineError::Input(e.to_string()))?
                    == Performance::Low,
            ))
        })
        .collect::<Result<_, _>>()?;

    // internal hold-out for CFS scoring
    let classes: Vec<usize> = y_all.iter().map(|v| *v as usize).collect();
    let mut split_rng = substream(config.seed, "lr_transfer_split", 0);
    let (fit_idx, holdout_idx) = super::cnn::stratified_split(&classes, 0.2, &mut split_rng);

    let col_view = |rows: &[Vec<Option<f64>>], row_idx: &[usize], col_idx: &[usize]| -> Vec<Vec<Option<f64>>> {
        col_idx
            .iter()
            .map(|&c| row_idx.iter().map(|&i| rows[i][c]).collect())
            .collect()
    };
    let (mut train_cols, mut hold_cols, _) = impute_train_mean(
        &col_view(&matrix_a.rows, &fit_idx, &pos_a),
        &col_view(&matrix_a.rows, &holdout_idx, &pos_a),
    );
    let (means, stds) = standardize_columns(&mut train_cols, &mut hold_cols);

    let to_rows = |cols: &[Vec<f64>], n_rows: usize| -> Vec<Vec<f64>> {
        (0..n_rows).map(|r| cols.iter().map(|c| c[r]).collect()).collect()
    };
    let real_rows = to_rows(&train_cols, fit_idx.len());
    let hold_rows = to_rows(&hold_cols, holdout_idx.len());
    let y_fit: Vec<u8> = fit_idx.iter().map(|&i| y_all[i]).collect();
    let y_hold: Vec<u8> = holdout_idx.iter().map(|&i| y_all[i]).collect();

    let mut smote_rng = substream(config.seed, "lr_transfer_smote", 0);
    let (fit_rows, fit_y) = smote(&real_rows, &y_fit, config.smote_k, &mut smote_rng)?;
    let fit_cols: Vec<Vec<f64>> = (0..common.len())
        .map(|c| fit_rows.iter().map(|r| r[c]).collect())
        .collect();
    let kept = prune_collinear(&fit_cols, config.collinearity_cutoff);

    let corr_target: Vec<f64> = match config.corr_target {
        CorrTarget::ContinuousGpa => fit_idx.iter().map(|&i| gpa_a[&matrix_a.participants[i]]).collect(),
        CorrTarget::BinaryLabel => y_fit.iter().map(|v| *v as f64).collect(),
    };
    let cfs = cfs_select(
        CfsInputs {
            real_cols: &train_cols,
            corr_target: &corr_target,
            kept: &kept,
            fit_rows: &fit_rows,
            fit_y: &fit_y,
            test_rows: &hold_rows,
            test_y: &y_hold,
        },
        config,
    );
    let model = lr_fit(&gather(&fit_rows, &cfs.selected), &fit_y, config.lr)
        .map_err(PipelineError::Learner)?;

    // cohort B through A's imputation means and standardization
    let n_b = matrix_b.participants.len();
    let all_b: Vec<usize> = (0..n_b).collect();
    let b_cols_opt = col_view(&matrix_b.rows, &all_b, &pos_b);
    // refill with A's training means: reuse the imputation by building the
    // fills from the already-standardized train columns is wrong, so run
    // the imputation against A's raw training view again
    let (_, mut b_cols, _) = impute_train_mean(&col_view(&matrix_a.rows, &fit_idx, &pos_a), &b_cols_opt);
    for (c, col) in b_cols.iter_mut().enumerate() {
        for v in col.iter_mut() {
            *v = (*v - means[c]) / stds[c];
        }
    }
    let b_rows = to_rows(&b_cols, n_b);
    let probs = model
        .predict_proba(&gather(&b_rows, &cfs.selected))
        .map_err(PipelineError::Learner)?;
    let mut rows = BTreeMap::new();
    for (i, p) in matrix_b.participants.iter().enumerate() {
        rows.insert(
            p.clone(),
            PredictionRow {
                label: if probs[i] > 0.5 { Performance::Low } else { Performance::High },
                prob_low: probs[i],
            },
        );
    }
    let _ = n_a;
    Ok(ScoredPredictions {
        approach: "lr".to_string(),
        trained_on: [cohort_a_id.to_string()].into(),
        rows,
    })
}

fn gpa_cohort_tag(matrix: &WeeklyMatrix) -> String {
    // participant ids are prefixed with the cohort id
    matrix
        .participants
        .first()
        .and_then(|p| p.as_str().split_once("_p").map(|(c, _)| c.to_string()))
        .unwrap_or_else(|| "unknown".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn impute_uses_training_means_and_sentinel() {
        let train = vec![
            vec![Some(1.0), Some(3.0), None],
            vec![None, None, None],
            vec![Some(2.0), Some(2.0), Some(2.0)],
        ];
        let test = vec![vec![None], vec![None], vec![Some(5.0)]];
        let (tr, te, fills) = impute_train_mean(&train, &test);
        assert_eq!(fills, vec![2.0, 999.0, 2.0]);
        assert_eq!(tr[0], vec![1.0, 3.0, 2.0]);
        assert_eq!(tr[1], vec![999.0, 999.0, 999.0]);
        assert_eq!(te[0], vec![2.0]);
        assert_eq!(te[1], vec![999.0]);
        assert_eq!(te[2], vec![5.0]);
    }

    #[test]
    fn smote_balances_exactly_and_stays_on_segments() {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut y = Vec::new();
        for i in 0..10 {
            rows.push(vec![i as f64 * 0.1, 1.0]);
            y.push(1u8);
        }
        for i in 0..40 {
            rows.push(vec![5.0 + i as f64 * 0.1, -1.0]);
            y.push(0u8);
        }
        let mut rng = substream(3, "smote", 0);
        let (aug, ay) = smote(&rows, &y, 5, &mut rng).unwrap();
        let pos = ay.iter().filter(|v| **v == 1).count();
        let neg = ay.len() - pos;
        assert_eq!(pos, 40);
        assert_eq!(neg, 40);
        // every synthetic row lies on a segment between two minority rows
        let minority: Vec<&Vec<f64>> = rows.iter().zip(&y).filter(|(_, l)| **l == 1).map(|(r, _)| r).collect();
        for synth in &aug[rows.len()..] {
            let on_segment = minority.iter().enumerate().any(|(a, ra)| {
                minority.iter().skip(a + 1).any(|rb| {
                    // collinear and between
                    let d0 = synth[0] - ra[0];
                    let seg = rb[0] - ra[0];
                    if seg.abs() < 1e-12 {
                        return (synth[0] - ra[0]).abs() < 1e-9;
                    }
                    let t = d0 / seg;
                    (0.0..=1.0).contains(&t)
                        && (synth[1] - (ra[1] + t * (rb[1] - ra[1]))).abs() < 1e-9
                })
            });
            assert!(on_segment, "synthetic point off the minority segments: {synth:?}");
        }
        // determinism
        let mut rng2 = substream(3, "smote", 0);
        let (aug2, _) = smote(&rows, &y, 5, &mut rng2).unwrap();
        assert_eq!(aug, aug2);
    }

    #[test]
    fn smote_identity_when_balanced_and_error_when_tiny() {
        let rows = vec![vec![0.0], vec![1.0]];
        let y = vec![0, 1];
        let mut rng = substream(0, "smote", 0);
        let (aug, ay) = smote(&rows, &y, 5, &mut rng).unwrap();
        assert_eq!(aug.len(), 2);
        assert_eq!(ay, y);

        let rows = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = vec![0, 0, 1];
        assert!(smote(&rows, &y, 5, &mut rng).is_err());
    }

    #[test]
    fn prune_drops_duplicates_keeps_boundary() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.clone(); // r = 1 with a
        let c: Vec<f64> = (0..50).map(|i| (i as f64 * 1.93).cos()).collect();
        let kept = prune_collinear(&[a.clone(), b, c], 0.7);
        assert_eq!(kept, vec![0, 2]);

        // r exactly at the cutoff survives (strict >)
        let x: Vec<f64> = (0..100).map(|i| i as f64 / 10.0).collect();
        let mut rng = substream(1, "noise", 0);
        // construct y with corr ~exactly 0.7 by mixing x with noise, then
        // verify the boundary semantics with a literal cutoff of |r|
        let noise: Vec<f64> = (0..100).map(|_| rng.gen::<f64>() - 0.5).collect();
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, n)| a + 40.0 * n).collect();
        let (r, _) = corr_with_p(&x, &y);
        let kept = prune_collinear(&[x.clone(), y.clone()], r.abs());
        assert_eq!(kept, vec![0, 1], "cutoff equal to |r| keeps both");
        let kept = prune_collinear(&[x, y], r.abs() - 1e-9);
        assert_eq!(kept, vec![0]);
    }

    #[test]
    fn independent_columns_survive_pruning() {
        let mut rng = substream(7, "cols", 0);
        let cols: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..400).map(|_| rng.gen::<f64>() - 0.5).collect())
            .collect();
        let kept = prune_collinear(&cols, 0.7);
        assert_eq!(kept.len(), 20);
    }

    #[test]
    fn corr_p_values_flag_strong_relationships() {
        let x: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let (r, p) = corr_with_p(&x, &y);
        assert!((r - 1.0).abs() < 1e-12);
        assert!(p < 1e-10);

        let mut rng = substream(9, "corr", 0);
        let noise: Vec<f64> = (0..60).map(|_| rng.gen::<f64>()).collect();
        let (_, p) = corr_with_p(&x, &noise);
        assert!(p > 0.001);
    }
}
