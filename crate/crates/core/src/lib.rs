//! Early academic-risk prediction toolkit.
//!
//! Reproduces, at desk scale on synthetic cohorts, three early-prediction
//! approaches over passive-sensing behavioral data (logistic regression,
//! a 1D CNN, and a multi-task 1D CNN), together with the feature
//! extraction, preprocessing, and human-centered evaluation machinery
//! (explainability, fairness, generalizability) around them.

pub mod domain;
pub mod eval;
pub mod features;
pub mod learners;
pub mod pipelines;
pub mod rng;
pub mod synth;

pub use domain::{DomainError, Epoch, ParticipantId, Performance};
