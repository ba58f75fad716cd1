//! End-to-end approach pipelines with their approach-specific preprocessing
//! and cross-validation drivers, plus the no-leakage contracts.

mod cnn;
mod lr;
mod mtl;
mod tabular;

pub use cnn::{
    duplicate_balance, ffill_bfill, fit_cnn_full, run_cnn_pipeline, run_cnn_transfer, stratified_folds,
    stratified_split, CnnPipelineInputs, CnnRunResult, RepeatResult, TensorSource,
};
pub use lr::{
    cfs_select, corr_with_p, impute_train_mean, prune_collinear, run_lr_fold, run_lr_pipeline,
    run_lr_transfer, smote, standardize_columns, CfsInputs, CfsOutcome, CorrTarget, FoldResult,
    FoldStats, LrPipelineConfig, LrRunResult, CFS_LEAKAGE_FLAG,
};
pub use mtl::{run_mtl_pipeline, MtlPipelineInputs, MtlRunResult};
pub use tabular::{column_means, weekly_matrix, WeeklyMatrix};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("pipeline input error: {0}")]
    Input(String),
    #[error("smote: {0}")]
    Smote(String),
    #[error(transparent)]
    Learner(#[from] crate::learners::LearnerError),
}
