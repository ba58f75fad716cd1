//! Paired cohort generation for generalizability experiments: two cohorts
//! share every planted-effect sign while the second one's behavior
//! distributions are shifted by a configurable amount.

use rand::Rng;

use crate::rng::substream;

use super::generate::generate_cohort_impl;
use super::{Cohort, CohortConfig, EffectFamily, SynthError};

/// Population-level distribution shift applied to the second cohort.
/// Each behavior family's base parameter moves by `magnitude` natural
/// standard deviations in a direction drawn from the shift seed; wake and
/// bed times drift as well.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct DistributionShift {
    pub magnitude: f64,
    pub seed: u64,
}

impl DistributionShift {
    pub fn none() -> Self {
        Self {
            magnitude: 0.0,
            seed: 0,
        }
    }

    fn direction(&self, label: &str, index: u64) -> f64 {
        if substream(self.seed, label, index).gen::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    pub(super) fn family_offset(&self, family: EffectFamily) -> f64 {
        if self.magnitude == 0.0 {
            return 0.0;
        }
        let index = EffectFamily::ALL.iter().position(|f| *f == family).expect("known family");
        self.magnitude * self.direction("shift_family", index as u64)
    }

    pub(super) fn timing_offset_min(&self) -> f64 {
        if self.magnitude == 0.0 {
            return 0.0;
        }
        20.0 * self.magnitude * self.direction("shift_timing", 0)
    }
}

/// Generate two cohorts with identical planted-effect signs; cohort B's
/// behavior marginals are moved by `shift`. The configs may differ in seed,
/// size, and prior persistence, but must agree on the planted effects.
pub fn generate_cohort_pair(
    config_a: &CohortConfig,
    config_b: &CohortConfig,
    shift: DistributionShift,
) -> Result<(Cohort, Cohort), SynthError> {
    if config_a.planted_effects != config_b.planted_effects {
        return Err(SynthError::Config(
            "paired cohorts must share planted effects".into(),
        ));
    }
    if config_a.cohort_id == config_b.cohort_id {
        return Err(SynthError::Config("paired cohorts need distinct ids".into()));
    }
    let a = generate_cohort_impl(config_a, None)?;
    let b = generate_cohort_impl(config_b, Some(&shift))?;
    Ok((a, b))
}
