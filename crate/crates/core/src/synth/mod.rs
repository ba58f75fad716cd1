//! Seeded synthetic cohort generator: sensor streams, self-report features,
//! GPA labels, protected traits, and class schedules with configurable
//! planted effects, standing in for the private student datasets.

pub mod campus;
mod generate;
mod missing;
mod pair;
mod table;

pub use generate::generate_cohort;
pub use missing::inject_missingness;
pub use pair::{generate_cohort_pair, DistributionShift};
pub use table::SelfReportTable;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::io::Schedule;
use crate::domain::{LabelSet, ParticipantId, ProtectedTraits, Sensor, SensorEvent};
use crate::features::PlaceMap;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown behavior family `{0}`")]
    UnknownFamily(String),
}

/// A behavior the generator can modulate, with its association to GPA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectFamily {
    ClassAttendance,
    WeekdayPhoneUse,
    RestlessSleep,
    WeekdayExercise,
    GreensTime,
    PartyTime,
}

impl EffectFamily {
    pub const ALL: [EffectFamily; 6] = [
        EffectFamily::ClassAttendance,
        EffectFamily::WeekdayPhoneUse,
        EffectFamily::RestlessSleep,
        EffectFamily::WeekdayExercise,
        EffectFamily::GreensTime,
        EffectFamily::PartyTime,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EffectFamily::ClassAttendance => "class_attendance",
            EffectFamily::WeekdayPhoneUse => "weekday_phone_use",
            EffectFamily::RestlessSleep => "restless_sleep",
            EffectFamily::WeekdayExercise => "weekday_exercise",
            EffectFamily::GreensTime => "greens_time",
            EffectFamily::PartyTime => "party_time",
        }
    }

    pub fn parse(s: &str) -> Result<Self, SynthError> {
        EffectFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| SynthError::UnknownFamily(s.to_string()))
    }

    /// Extracted features that measure this behavior, each tagged with its
    /// orientation: +1 when the feature grows with the behavior, -1 when it
    /// shrinks (a complement, like maximal asleep-bout length under
    /// restless sleep). Used to decide whether an importance ranking
    /// rediscovered a planted behavior with the right sign.
    pub fn feature_markers(&self) -> &'static [(&'static str, i8)] {
        match self {
            EffectFamily::ClassAttendance => &[
                ("hl_class_att", 1),
                ("place_study", 1),
                ("hl_study", 1),
            ],
            EffectFamily::WeekdayPhoneUse => &[("scr_", 1)],
            EffectFamily::RestlessSleep => &[
                ("slp_restless", 1),
                ("slp_asleep_bouts", 1),
                ("slp_asleep_bout_mean", -1),
                ("slp_asleep_bout_max", -1),
                ("slp_efficiency", -1),
            ],
            EffectFamily::WeekdayExercise => &[("place_exercise", 1), ("steps_", 1)],
            EffectFamily::GreensTime => &[("place_greens", 1)],
            EffectFamily::PartyTime => &[("hl_party", 1), ("place_frat", 1)],
        }
    }

    pub fn matches_feature(&self, feature_name: &str) -> bool {
        self.feature_markers().iter().any(|(m, _)| feature_name.contains(m))
    }

    /// Orientation of the first marker the feature name matches.
    pub fn feature_orientation(&self, feature_name: &str) -> Option<i8> {
        self.feature_markers()
            .iter()
            .find(|(m, _)| feature_name.contains(m))
            .map(|(_, o)| *o)
    }
}

/// A planted association between one behavior family and GPA.
/// `strength` is in standard-deviation units of the behavior's natural
/// between-person spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedEffect {
    pub family: EffectFamily,
    /// +1: more of the behavior goes with higher GPA; -1: with lower.
    pub direction: i8,
    pub strength: f64,
}

impl PlantedEffect {
    pub fn new(family: EffectFamily, direction: i8, strength: f64) -> Self {
        Self {
            family,
            direction,
            strength,
        }
    }
}

/// The published-table default directions: attendance and weekday exercise
/// help; weekday phone use and restless sleep hurt.
pub fn default_planted_effects() -> Vec<PlantedEffect> {
    vec![
        PlantedEffect::new(EffectFamily::ClassAttendance, 1, 1.0),
        PlantedEffect::new(EffectFamily::WeekdayPhoneUse, -1, 1.0),
        PlantedEffect::new(EffectFamily::RestlessSleep, -1, 1.0),
        PlantedEffect::new(EffectFamily::WeekdayExercise, 1, 1.0),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraitPrevalences {
    pub underrepresented_minority: f64,
    pub first_generation: f64,
    pub gender_minority: f64,
    pub sexual_minority: f64,
}

impl Default for TraitPrevalences {
    fn default() -> Self {
        // 2018 cohort shares
        Self {
            underrepresented_minority: 0.17,
            first_generation: 0.303,
            gender_minority: 0.654,
            sexual_minority: 0.112,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub cohort_id: String,
    pub seed: u64,
    pub n_participants: usize,
    pub n_days: usize,
    pub low_performer_fraction: f64,
    pub trait_prevalences: TraitPrevalences,
    pub planted_effects: Vec<PlantedEffect>,
    /// Correlation between the prior-term and current-term latent scores.
    pub prior_persistence: f64,
    /// Fraction of participants reporting a prior-term GPA.
    pub prior_coverage: f64,
    pub n_noise_self_reports: usize,
    pub missing_rate_by_sensor: BTreeMap<Sensor, f64>,
    /// First day of the term week; must be a Monday.
    pub start_date: NaiveDate,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            cohort_id: "cohort".to_string(),
            seed: 0,
            n_participants: 188,
            n_days: 7,
            low_performer_fraction: 0.23,
            trait_prevalences: TraitPrevalences::default(),
            planted_effects: default_planted_effects(),
            prior_persistence: 0.6,
            prior_coverage: 1.0,
            n_noise_self_reports: 100,
            missing_rate_by_sensor: BTreeMap::new(),
            start_date: NaiveDate::from_ymd_opt(2018, 4, 2).expect("valid date"),
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_participants == 0 {
            return Err(SynthError::Config("n_participants must be positive".into()));
        }
        if self.n_days < 7 {
            return Err(SynthError::Config(
                "n_days must be at least 7 for weekly behavioral-change features".into(),
            ));
        }
        if self.low_performer_fraction <= 0.0 || self.low_performer_fraction >= 1.0 {
            return Err(SynthError::Config("low_performer_fraction must be in (0,1)".into()));
        }
        for p in [
            self.trait_prevalences.underrepresented_minority,
            self.trait_prevalences.first_generation,
            self.trait_prevalences.gender_minority,
            self.trait_prevalences.sexual_minority,
        ] {
            if p <= 0.0 || p >= 1.0 {
                return Err(SynthError::Config("trait prevalences must be in (0,1)".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.prior_persistence) {
            return Err(SynthError::Config("prior_persistence must be in [0,1]".into()));
        }
        if !(0.0..=1.0).contains(&self.prior_coverage) {
            return Err(SynthError::Config("prior_coverage must be in [0,1]".into()));
        }
        for (s, r) in &self.missing_rate_by_sensor {
            if !(0.0..=1.0).contains(r) {
                return Err(SynthError::Config(format!(
                    "missing rate for {} must be in [0,1]",
                    s.as_str()
                )));
            }
        }
        if self.start_date.format("%u").to_string() != "1" {
            return Err(SynthError::Config("start_date must be a Monday".into()));
        }
        Ok(())
    }

    pub fn days(&self) -> Vec<NaiveDate> {
        (0..self.n_days)
            .map(|i| self.start_date + chrono::Duration::days(i as i64))
            .collect()
    }
}

/// What the generator actually did: latent scores and realized behavior
/// aggregates, for verifying planted signs without running extractors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub applied_effects: Vec<PlantedEffect>,
    pub latent_academic: BTreeMap<ParticipantId, f64>,
    /// family -> participant -> mean daily value of the behavior.
    pub behavior_means: BTreeMap<EffectFamily, BTreeMap<ParticipantId, f64>>,
}

/// A full generated cohort.
#[derive(Debug, Clone)]
pub struct Cohort {
    pub config: CohortConfig,
    pub days: Vec<NaiveDate>,
    pub events: BTreeMap<ParticipantId, Vec<SensorEvent>>,
    pub self_reports: SelfReportTable,
    pub labels: LabelSet,
    pub traits: ProtectedTraits,
    pub schedule: Schedule,
    pub place_map: PlaceMap,
    pub ground_truth: GroundTruth,
}

impl Cohort {
    pub fn participants(&self) -> Vec<ParticipantId> {
        self.labels.gpa_current.keys().cloned().collect()
    }
}
