//! Core data model shared by every module: participants, epochs, sensor
//! events, the participant x day x feature matrix, labels, and traits,
//! plus the common cleaning steps (IQR capping, one-hot encoding,
//! all-missing feature removal) and epoch slicing.

mod clean;
pub mod io;
mod matrix;
mod seal;

pub use clean::{
    cap_matrix_outliers, cap_outliers_iqr, drop_all_missing, one_hot, quantile_type7, OneHotColumn,
};
pub use matrix::DailyFeatureMatrix;
pub use seal::SealedLabels;

use std::collections::BTreeMap;
use std::fmt;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

/// GPA cutoff separating high from low performers.
pub const GPA_CUTOFF: f64 = 3.2;

#[derive(Debug, thiserror::Error)]
pub enum DomainError {
    #[error("gpa {0} outside [0, 4]")]
    GpaOutOfRange(f64),
    #[error("matrix shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown {kind} `{value}`")]
    UnknownValue { kind: &'static str, value: String },
    #[error("malformed record: {0}")]
    Malformed(String),
}

/// Opaque participant identifier, unique within a cohort.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParticipantId(pub String);

impl ParticipantId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ParticipantId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Binary performance label derived from the GPA cutoff. `Low < High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Performance {
    Low,
    High,
}

impl Performance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Performance::Low => "low",
            Performance::High => "high",
        }
    }
}

/// Classify a GPA on the 4-point scale. High iff strictly above the cutoff.
pub fn label_from_gpa(gpa: f64) -> Result<Performance, DomainError> {
    if !(0.0..=4.0).contains(&gpa) || !gpa.is_finite() {
        return Err(DomainError::GpaOutOfRange(gpa));
    }
    Ok(if gpa > GPA_CUTOFF {
        Performance::High
    } else {
        Performance::Low
    })
}

/// Fixed local-time window of a day over which features are aggregated.
///
/// The four partial epochs partition the full day; windows are half-open
/// `[start, end)` in minutes from midnight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Epoch {
    Morning,
    Afternoon,
    Evening,
    Night,
    FullDay,
}

impl Epoch {
    pub const ALL: [Epoch; 5] = [
        Epoch::Morning,
        Epoch::Afternoon,
        Epoch::Evening,
        Epoch::Night,
        Epoch::FullDay,
    ];

    pub const PARTIAL: [Epoch; 4] = [
        Epoch::Morning,
        Epoch::Afternoon,
        Epoch::Evening,
        Epoch::Night,
    ];

    /// Window as `[start, end)` minutes from local midnight.
    pub fn window(&self) -> (u32, u32) {
        match self {
            Epoch::Morning => (6 * 60, 12 * 60),
            Epoch::Afternoon => (12 * 60, 18 * 60),
            Epoch::Evening => (18 * 60, 24 * 60),
            Epoch::Night => (0, 6 * 60),
            Epoch::FullDay => (0, 24 * 60),
        }
    }

    pub fn contains_minute(&self, minute_of_day: u32) -> bool {
        let (lo, hi) = self.window();
        minute_of_day >= lo && minute_of_day < hi
    }

    /// Window length in minutes.
    pub fn len_minutes(&self) -> u32 {
        let (lo, hi) = self.window();
        hi - lo
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Epoch::Morning => "morning",
            Epoch::Afternoon => "afternoon",
            Epoch::Evening => "evening",
            Epoch::Night => "night",
            Epoch::FullDay => "24hr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sensor {
    Activity,
    Battery,
    Bluetooth,
    Call,
    Location,
    Screen,
    Wifi,
    SleepMinute,
    StepMinute,
}

impl Sensor {
    pub const ALL: [Sensor; 9] = [
        Sensor::Activity,
        Sensor::Battery,
        Sensor::Bluetooth,
        Sensor::Call,
        Sensor::Location,
        Sensor::Screen,
        Sensor::Wifi,
        Sensor::SleepMinute,
        Sensor::StepMinute,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Sensor::Activity => "activity",
            Sensor::Battery => "battery",
            Sensor::Bluetooth => "bluetooth",
            Sensor::Call => "call",
            Sensor::Location => "location",
            Sensor::Screen => "screen",
            Sensor::Wifi => "wifi",
            Sensor::SleepMinute => "sleep_minute",
            Sensor::StepMinute => "step_minute",
        }
    }

    pub fn parse(s: &str) -> Result<Self, DomainError> {
        Sensor::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or(DomainError::UnknownValue {
                kind: "sensor",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivityKind {
    Still,
    Tilting,
    OnFoot,
    Walking,
    Running,
    OnBicycle,
}

impl ActivityKind {
    pub const ALL: [ActivityKind; 6] = [
        ActivityKind::Still,
        ActivityKind::Tilting,
        ActivityKind::OnFoot,
        ActivityKind::Walking,
        ActivityKind::Running,
        ActivityKind::OnBicycle,
    ];

    /// Non-stationary kinds count toward activity duration and mobility.
    pub fn is_moving(&self) -> bool {
        matches!(
            self,
            ActivityKind::OnFoot | ActivityKind::Walking | ActivityKind::Running | ActivityKind::OnBicycle
        )
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ActivityKind::Still => "still",
            ActivityKind::Tilting => "tilting",
            ActivityKind::OnFoot => "on_foot",
            ActivityKind::Walking => "walking",
            ActivityKind::Running => "running",
            ActivityKind::OnBicycle => "on_bicycle",
        }
    }

    pub fn parse(s: &str) -> Result<Self, DomainError> {
        ActivityKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or(DomainError::UnknownValue {
                kind: "activity kind",
                value: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Incoming,
    Outgoing,
    Missed,
}

impl CallKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CallKind::Incoming => "incoming",
            CallKind::Outgoing => "outgoing",
            CallKind::Missed => "missed",
        }
    }

    pub fn parse(s: &str) -> Result<Self, DomainError> {
        match s {
            "incoming" => Ok(CallKind::Incoming),
            "outgoing" => Ok(CallKind::Outgoing),
            "missed" => Ok(CallKind::Missed),
            _ => Err(DomainError::UnknownValue {
                kind: "call kind",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenEvent {
    On,
    Off,
    Lock,
    Unlock,
}

impl ScreenEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScreenEvent::On => "on",
            ScreenEvent::Off => "off",
            ScreenEvent::Lock => "lock",
            ScreenEvent::Unlock => "unlock",
        }
    }

    pub fn parse(s: &str) -> Result<Self, DomainError> {
        match s {
            "on" => Ok(ScreenEvent::On),
            "off" => Ok(ScreenEvent::Off),
            "lock" => Ok(ScreenEvent::Lock),
            "unlock" => Ok(ScreenEvent::Unlock),
            _ => Err(DomainError::UnknownValue {
                kind: "screen event",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SleepStatus {
    Asleep,
    Restless,
    Awake,
}

impl SleepStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SleepStatus::Asleep => "asleep",
            SleepStatus::Restless => "restless",
            SleepStatus::Awake => "awake",
        }
    }

    pub fn parse(s: &str) -> Result<Self, DomainError> {
        match s {
            "asleep" => Ok(SleepStatus::Asleep),
            "restless" => Ok(SleepStatus::Restless),
            "awake" => Ok(SleepStatus::Awake),
            _ => Err(DomainError::UnknownValue {
                kind: "sleep status",
                value: s.to_string(),
            }),
        }
    }
}

/// Sensor-specific payload; the sensor tag is derived from the variant, so
/// a payload can never disagree with its sensor kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Activity { kind: ActivityKind },
    Battery { charging: bool },
    Bluetooth { address: String },
    Call { kind: CallKind, duration_min: f64 },
    Location { lat: f64, lon: f64 },
    Screen { event: ScreenEvent },
    Wifi { ap: String },
    SleepMinute { status: SleepStatus },
    StepMinute { steps: u32 },
}

impl Payload {
    pub fn sensor(&self) -> Sensor {
        match self {
            Payload::Activity { .. } => Sensor::Activity,
            Payload::Battery { .. } => Sensor::Battery,
            Payload::Bluetooth { .. } => Sensor::Bluetooth,
            Payload::Call { .. } => Sensor::Call,
            Payload::Location { .. } => Sensor::Location,
            Payload::Screen { .. } => Sensor::Screen,
            Payload::Wifi { .. } => Sensor::Wifi,
            Payload::SleepMinute { .. } => Sensor::SleepMinute,
            Payload::StepMinute { .. } => Sensor::StepMinute,
        }
    }
}

/// One timestamped sensor record for one participant. Timestamps are local
/// wall-clock at minute resolution; a cohort lives in a single fixed
/// timezone, so no conversion or DST handling applies.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorEvent {
    pub participant: ParticipantId,
    pub timestamp: NaiveDateTime,
    pub payload: Payload,
}

impl SensorEvent {
    pub fn new(participant: ParticipantId, timestamp: NaiveDateTime, payload: Payload) -> Self {
        Self {
            participant,
            timestamp,
            payload,
        }
    }

    pub fn sensor(&self) -> Sensor {
        self.payload.sensor()
    }

    pub fn date(&self) -> NaiveDate {
        self.timestamp.date()
    }

    pub fn minute_of_day(&self) -> u32 {
        self.timestamp.hour() * 60 + self.timestamp.minute()
    }
}

/// Events of one day/epoch window. The night epoch of day D is
/// `[D 00:00, D 06:00)`, i.e. the night belongs to the morning it precedes.
pub fn slice_epoch<'a>(stream: &'a [SensorEvent], day: NaiveDate, epoch: Epoch) -> &'a [SensorEvent] {
    let (lo, hi) = epoch.window();
    let start = day.and_hms_opt(lo / 60, lo % 60, 0).expect("valid window");
    let end = start + chrono::Duration::minutes((hi - lo) as i64);
    let from = stream.partition_point(|e| e.timestamp < start);
    let to = stream.partition_point(|e| e.timestamp < end);
    &stream[from..to]
}

/// GPA ground truth per participant: current-term always, prior-term where
/// the participant reported one. Binary labels derive from the 3.2 cutoff.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LabelSet {
    pub gpa_current: BTreeMap<ParticipantId, f64>,
    pub gpa_prior: BTreeMap<ParticipantId, f64>,
}

impl LabelSet {
    pub fn binary_current(&self, p: &ParticipantId) -> Option<Performance> {
        self.gpa_current.get(p).map(|g| label_from_gpa(*g).expect("stored gpa in range"))
    }

    pub fn binary_prior(&self, p: &ParticipantId) -> Option<Performance> {
        self.gpa_prior.get(p).map(|g| label_from_gpa(*g).expect("stored gpa in range"))
    }

    pub fn participants(&self) -> impl Iterator<Item = &ParticipantId> {
        self.gpa_current.keys()
    }

    pub fn insert(&mut self, p: ParticipantId, current: f64, prior: Option<f64>) -> Result<(), DomainError> {
        label_from_gpa(current)?;
        if let Some(g) = prior {
            label_from_gpa(g)?;
        }
        if let Some(g) = prior {
            self.gpa_prior.insert(p.clone(), g);
        }
        self.gpa_current.insert(p, current);
        Ok(())
    }
}

/// Per-participant protected-trait indicators used by the fairness
/// evaluation. Every retained participant must have all four defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitSet {
    pub underrepresented_minority: bool,
    pub first_generation: bool,
    pub gender_minority: bool,
    pub sexual_minority: bool,
}

impl TraitSet {
    pub fn get(&self, t: ProtectedTrait) -> bool {
        match t {
            ProtectedTrait::UnderrepresentedMinority => self.underrepresented_minority,
            ProtectedTrait::FirstGeneration => self.first_generation,
            ProtectedTrait::GenderMinority => self.gender_minority,
            ProtectedTrait::SexualMinority => self.sexual_minority,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtectedTrait {
    UnderrepresentedMinority,
    FirstGeneration,
    GenderMinority,
    SexualMinority,
}

impl ProtectedTrait {
    pub const ALL: [ProtectedTrait; 4] = [
        ProtectedTrait::UnderrepresentedMinority,
        ProtectedTrait::FirstGeneration,
        ProtectedTrait::GenderMinority,
        ProtectedTrait::SexualMinority,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProtectedTrait::UnderrepresentedMinority => "underrepresented_minority",
            ProtectedTrait::FirstGeneration => "first_generation",
            ProtectedTrait::GenderMinority => "gender_minority",
            ProtectedTrait::SexualMinority => "sexual_minority",
        }
    }
}

pub type ProtectedTraits = BTreeMap<ParticipantId, TraitSet>;

#[cfg(test)]
mod tests {
    use super::*;

    fn dt(d: &str, hm: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(&format!("{d}T{hm}"), "%Y-%m-%dT%H:%M").unwrap()
    }

    #[test]
    fn label_cutoff_is_strict() {
        assert_eq!(label_from_gpa(3.69).unwrap(), Performance::High);
        assert_eq!(label_from_gpa(3.2).unwrap(), Performance::Low);
        assert_eq!(label_from_gpa(0.0).unwrap(), Performance::Low);
        assert!(label_from_gpa(4.2).is_err());
        assert!(label_from_gpa(-0.1).is_err());
        assert!(label_from_gpa(f64::NAN).is_err());
    }

    #[test]
    fn label_is_monotone() {
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 / 10.0).collect();
        for &a in &grid {
            for &b in &grid {
                if a <= b {
                    assert!(label_from_gpa(a).unwrap() <= label_from_gpa(b).unwrap());
                }
            }
        }
    }

    #[test]
    fn partial_epochs_partition_the_day() {
        let mut covered = vec![0u8; 1440];
        for epoch in Epoch::PARTIAL {
            let (lo, hi) = epoch.window();
            for m in lo..hi {
                covered[m as usize] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
        assert_eq!(Epoch::FullDay.len_minutes(), 1440);
    }

    #[test]
    fn slice_epoch_respects_half_open_bounds() {
        let day = NaiveDate::from_ymd_opt(2018, 4, 2).unwrap();
        let p = ParticipantId::from("p1");
        let ev = |hm: &str| {
            SensorEvent::new(
                p.clone(),
                dt("2018-04-02", hm),
                Payload::StepMinute { steps: 1 },
            )
        };
        let stream = vec![ev("05:59"), ev("06:00"), ev("11:59"), ev("12:00")];
        let morning = slice_epoch(&stream, day, Epoch::Morning);
        assert_eq!(morning.len(), 2);
        assert_eq!(morning[0].minute_of_day(), 360);
        assert_eq!(morning[1].minute_of_day(), 719);

        let empty: Vec<SensorEvent> = vec![];
        assert!(slice_epoch(&empty, day, Epoch::FullDay).is_empty());
    }

    #[test]
    fn epoch_slices_sum_to_full_day() {
        let day = NaiveDate::from_ymd_opt(2018, 4, 2).unwrap();
        let p = ParticipantId::from("p1");
        let stream: Vec<SensorEvent> = (0..1440)
            .step_by(7)
            .map(|m| {
                SensorEvent::new(
                    p.clone(),
                    day.and_hms_opt(m / 60, m % 60, 0).unwrap(),
                    Payload::StepMinute { steps: m },
                )
            })
            .collect();
        let total: usize = Epoch::PARTIAL
            .iter()
            .map(|e| slice_epoch(&stream, day, *e).len())
            .sum();
        assert_eq!(total, slice_epoch(&stream, day, Epoch::FullDay).len());
    }

    #[test]
    fn night_epoch_belongs_to_same_calendar_day() {
        let day = NaiveDate::from_ymd_opt(2018, 4, 3).unwrap();
        let p = ParticipantId::from("p1");
        let stream = vec![
            SensorEvent::new(p.clone(), dt("2018-04-02", "23:59"), Payload::Battery { charging: true }),
            SensorEvent::new(p.clone(), dt("2018-04-03", "00:00"), Payload::Battery { charging: true }),
            SensorEvent::new(p.clone(), dt("2018-04-03", "05:59"), Payload::Battery { charging: false }),
            SensorEvent::new(p, dt("2018-04-03", "06:00"), Payload::Battery { charging: false }),
        ];
        let night = slice_epoch(&stream, day, Epoch::Night);
        assert_eq!(night.len(), 2);
    }
}
