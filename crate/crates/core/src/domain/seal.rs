//! Structural guard keeping an evaluation cohort's current-term labels out
//! of reach of any trainer.
//!
//! The labels live in a private field; the only way to read them is
//! [`SealedLabels::unseal`], which demands an [`crate::eval::UnsealPermit`].
//! That permit type can only be constructed inside the evaluator module, so
//! pipeline and learner code cannot open the seal even by accident. Every
//! open is counted, letting tests assert the seal stayed closed during
//! training.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU32, Ordering};

use super::ParticipantId;

#[derive(Debug)]
pub struct SealedLabels {
    cohort_id: String,
    gpa_current: BTreeMap<ParticipantId, f64>,
    opens: AtomicU32,
}

impl SealedLabels {
    pub fn seal(cohort_id: impl Into<String>, gpa_current: BTreeMap<ParticipantId, f64>) -> Self {
        Self {
            cohort_id: cohort_id.into(),
            gpa_current,
            opens: AtomicU32::new(0),
        }
    }

    /// Identity of the cohort whose labels are sealed; used for lineage checks.
    pub fn cohort_id(&self) -> &str {
        &self.cohort_id
    }

    /// Participant ids are not secret, only their labels are.
    pub fn participants(&self) -> impl Iterator<Item = &ParticipantId> {
        self.gpa_current.keys()
    }

    pub fn len(&self) -> usize {
        self.gpa_current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gpa_current.is_empty()
    }

    /// How many times the seal has been opened.
    pub fn open_count(&self) -> u32 {
        self.opens.load(Ordering::SeqCst)
    }

    /// Read the sealed labels. Requires the evaluator's permit.
    pub fn unseal(&self, _permit: &crate::eval::UnsealPermit) -> &BTreeMap<ParticipantId, f64> {
        self.opens.fetch_add(1, Ordering::SeqCst);
        &self.gpa_current
    }
}
