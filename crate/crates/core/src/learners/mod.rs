//! From-scratch numerical models: logistic regression, the 0R and 1R-SVM
//! baselines, the 1-D CNN with Adam, its multi-task extension, gradient
//! checking, and model persistence.

pub mod cnn;
pub mod gradcheck;
pub mod linear;
pub mod mtl;
pub mod persist;

pub use cnn::{
    apply_inverted_dropout, class_index, cnn_fit, cnn_fit_fixed, mean_ce, Adam, Cnn1dModel,
    CnnConfig, EpochLoss, FitHistory, Tensor3, TrainConfig, CLASS_HIGH, CLASS_LOW,
};
pub use gradcheck::{finite_difference_gradient, gradient_check, max_relative_error};
pub use linear::{
    hinge_gradient, hinge_kink_margin, hinge_objective, logistic_gradient, logistic_loss, lr_fit,
    one_rule_svm_fit, LogisticModel, LrConfig, OneRuleSvm, ZeroRule,
};
pub use mtl::{mtl_fit, LabelKind, MtlModel, Task, TaskData};
pub use persist::{decode_f64s, encode_f64s, ModelArtifact};

#[derive(Debug, thiserror::Error)]
pub enum LearnerError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("label leakage: {0}")]
    Leakage(String),
    #[error("model artifact error: {0}")]
    Artifact(String),
}
