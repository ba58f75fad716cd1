//! Wearable features: sleep bouts from per-minute sleep status, and step
//! features with active/sedentary bout grouping at the 12 steps-per-minute
//! activity threshold.

use std::collections::BTreeMap;

use chrono::{NaiveDateTime, Timelike};

use crate::domain::{Payload, SensorEvent, SleepStatus};

use super::bouts::{max, mean, min, minute_bouts, sample_std, MinuteBout};

pub const SLEEP_NAMES: [&str; 17] = [
    "slp_asleep_min",
    "slp_restless_min",
    "slp_awake_min",
    "slp_in_bed_min",
    "slp_efficiency",
    "slp_asleep_bouts",
    "slp_asleep_bout_mean",
    "slp_asleep_bout_max",
    "slp_asleep_bout_min",
    "slp_restless_bouts",
    "slp_restless_bout_mean",
    "slp_restless_bout_max",
    "slp_awake_bouts",
    "slp_awake_bout_mean",
    "slp_awake_bout_max",
    "slp_start_min",
    "slp_end_min",
];

pub fn sleep_bouts(day_events: &[SensorEvent]) -> Vec<MinuteBout<SleepStatus>> {
    let samples: Vec<(NaiveDateTime, SleepStatus)> = day_events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::SleepMinute { status } => Some((e.timestamp, *status)),
            _ => None,
        })
        .collect();
    minute_bouts(&samples)
}

/// Sleep features over one calendar day (sleep is daily-only; no epochs).
pub fn sleep_features(day_events: &[SensorEvent]) -> Vec<Option<f64>> {
    let bouts = sleep_bouts(day_events);
    if bouts.is_empty() {
        return vec![None; SLEEP_NAMES.len()];
    }
    let mut minutes: BTreeMap<SleepStatus, f64> = BTreeMap::new();
    let mut durations: BTreeMap<SleepStatus, Vec<f64>> = BTreeMap::new();
    for b in &bouts {
        *minutes.entry(b.state).or_default() += b.len_min as f64;
        durations.entry(b.state).or_default().push(b.len_min as f64);
    }
    let asleep = minutes.get(&SleepStatus::Asleep).copied().unwrap_or(0.0);
    let restless = minutes.get(&SleepStatus::Restless).copied().unwrap_or(0.0);
    let awake = minutes.get(&SleepStatus::Awake).copied().unwrap_or(0.0);
    let in_bed = asleep + restless + awake;
    let empty = Vec::new();
    let stat3 = |status: SleepStatus| {
        let d = durations.get(&status).unwrap_or(&empty);
        (Some(d.len() as f64), mean(d), max(d))
    };
    let (asleep_n, asleep_mean, asleep_max) = stat3(SleepStatus::Asleep);
    let asleep_min_dur = min(durations.get(&SleepStatus::Asleep).unwrap_or(&empty));
    let (restless_n, restless_mean, restless_max) = stat3(SleepStatus::Restless);
    let (awake_n, awake_mean, awake_max) = stat3(SleepStatus::Awake);
    let start = bouts.first().map(|b| (b.start.hour() * 60 + b.start.minute()) as f64);
    let last = bouts.last().map(|b| {
        let end = b.end - chrono::Duration::minutes(1);
        (end.hour() * 60 + end.minute()) as f64
    });
    vec![
        Some(asleep),
        Some(restless),
        Some(awake),
        Some(in_bed),
        (in_bed > 0.0).then(|| asleep / in_bed),
        asleep_n,
        asleep_mean,
        asleep_max,
        asleep_min_dur,
        restless_n,
        restless_mean,
        restless_max,
        awake_n,
        awake_mean,
        awake_max,
        start,
        last,
    ]
}

pub const STEP_NAMES: [&str; 12] = [
    "steps_total",
    "steps_active_bouts",
    "steps_active_bout_min_mean",
    "steps_active_bout_min_std",
    "steps_active_bout_min_max",
    "steps_active_bout_steps_mean",
    "steps_active_bout_steps_max",
    "steps_sedentary_bouts",
    "steps_sedentary_bout_min_mean",
    "steps_sedentary_bout_min_std",
    "steps_sedentary_bout_min_max",
    "steps_longest_active_start_min",
];

#[derive(Debug, Clone, PartialEq)]
pub struct StepBout {
    pub active: bool,
    pub start: NaiveDateTime,
    pub len_min: u32,
    pub steps: u32,
}

/// Group per-minute step samples into active/sedentary bouts. A minute is
/// active when its step count reaches the threshold; a recording gap ends
/// the current bout.
pub fn step_bouts(events: &[SensorEvent], active_threshold: u32) -> Vec<StepBout> {
    let samples: Vec<(NaiveDateTime, u32)> = events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::StepMinute { steps } => Some((e.timestamp, *steps)),
            _ => None,
        })
        .collect();
    let states: Vec<(NaiveDateTime, bool)> = samples
        .iter()
        .map(|(t, s)| (*t, *s >= active_threshold))
        .collect();
    let bouts = minute_bouts(&states);
    let mut step_iter = samples.iter().peekable();
    bouts
        .into_iter()
        .map(|b| {
            let mut steps = 0u32;
            while let Some(&&(t, s)) = step_iter.peek() {
                if t < b.end {
                    steps += s;
                    step_iter.next();
                } else {
                    break;
                }
            }
            StepBout {
                active: b.state,
                start: b.start,
                len_min: b.len_min,
                steps,
            }
        })
        .collect()
}

/// Step features over one window's events.
pub fn step_features(window_events: &[SensorEvent], active_threshold: u32) -> Vec<Option<f64>> {
    let total: u32 = window_events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::StepMinute { steps } => Some(*steps),
            _ => None,
        })
        .sum();
    let bouts = step_bouts(window_events, active_threshold);
    let active: Vec<&StepBout> = bouts.iter().filter(|b| b.active).collect();
    let sedentary: Vec<&StepBout> = bouts.iter().filter(|b| !b.active).collect();
    let adur: Vec<f64> = active.iter().map(|b| b.len_min as f64).collect();
    let asteps: Vec<f64> = active.iter().map(|b| b.steps as f64).collect();
    let sdur: Vec<f64> = sedentary.iter().map(|b| b.len_min as f64).collect();
    let longest_start = active
        .iter()
        .max_by_key(|b| (b.len_min, std::cmp::Reverse(b.start)))
        .map(|b| (b.start.hour() * 60 + b.start.minute()) as f64);
    vec![
        Some(total as f64),
        Some(active.len() as f64),
        mean(&adur),
        sample_std(&adur),
        max(&adur),
        mean(&asteps),
        max(&asteps),
        Some(sedentary.len() as f64),
        mean(&sdur),
        sample_std(&sdur),
        max(&sdur),
        longest_start,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ParticipantId;
    use chrono::NaiveDate;

    fn step_ev(minute: i64, steps: u32) -> SensorEvent {
        let t = NaiveDate::from_ymd_opt(2018, 4, 2)
            .unwrap()
            .and_hms_opt(10, 0, 0)
            .unwrap()
            + chrono::Duration::minutes(minute);
        SensorEvent::new(ParticipantId::from("p"), t, Payload::StepMinute { steps })
    }

    #[test]
    fn step_bout_hand_trace() {
        // per-minute steps [15,20,3,0,14,13,12,0] at threshold 12:
        // active bouts {15,20} and {14,13,12}; durations 2 and 3; steps 35 and 39
        let events: Vec<SensorEvent> = [15u32, 20, 3, 0, 14, 13, 12, 0]
            .iter()
            .enumerate()
            .map(|(i, s)| step_ev(i as i64, *s))
            .collect();
        let bouts = step_bouts(&events, 12);
        let active: Vec<&StepBout> = bouts.iter().filter(|b| b.active).collect();
        assert_eq!(active.len(), 2);
        assert_eq!(active[0].len_min, 2);
        assert_eq!(active[0].steps, 35);
        assert_eq!(active[1].len_min, 3);
        assert_eq!(active[1].steps, 39);

        let f = step_features(&events, 12);
        let named: BTreeMap<&str, Option<f64>> = STEP_NAMES.iter().copied().zip(f).collect();
        assert_eq!(named["steps_total"], Some(77.0));
        assert_eq!(named["steps_active_bouts"], Some(2.0));
        assert_eq!(named["steps_active_bout_min_mean"], Some(2.5));
        assert_eq!(named["steps_active_bout_steps_max"], Some(39.0));
        assert_eq!(named["steps_sedentary_bouts"], Some(2.0));
        // longest active bout starts at 10:04 = minute 604
        assert_eq!(named["steps_longest_active_start_min"], Some(604.0));
    }

    fn sleep_ev(minute: i64, status: SleepStatus) -> SensorEvent {
        let t = NaiveDate::from_ymd_opt(2018, 4, 2)
            .unwrap()
            .and_hms_opt(1, 0, 0)
            .unwrap()
            + chrono::Duration::minutes(minute);
        SensorEvent::new(ParticipantId::from("p"), t, Payload::SleepMinute { status })
    }

    #[test]
    fn sleep_bout_trace() {
        use SleepStatus::*;
        // asleep x3, restless x2, asleep x1, awake x1
        let statuses = [Asleep, Asleep, Asleep, Restless, Restless, Asleep, Awake];
        let events: Vec<SensorEvent> = statuses
            .iter()
            .enumerate()
            .map(|(i, s)| sleep_ev(i as i64, *s))
            .collect();
        let f = sleep_features(&events);
        let named: BTreeMap<&str, Option<f64>> = SLEEP_NAMES.iter().copied().zip(f).collect();
        assert_eq!(named["slp_asleep_min"], Some(4.0));
        assert_eq!(named["slp_restless_min"], Some(2.0));
        assert_eq!(named["slp_awake_min"], Some(1.0));
        assert_eq!(named["slp_in_bed_min"], Some(7.0));
        assert_eq!(named["slp_efficiency"], Some(4.0 / 7.0));
        assert_eq!(named["slp_asleep_bouts"], Some(2.0));
        assert_eq!(named["slp_asleep_bout_mean"], Some(2.0));
        assert_eq!(named["slp_asleep_bout_max"], Some(3.0));
        assert_eq!(named["slp_restless_bouts"], Some(1.0));
        assert_eq!(named["slp_start_min"], Some(60.0));
        assert_eq!(named["slp_end_min"], Some(66.0));
    }

    #[test]
    fn no_sleep_data_masks_everything() {
        let f = sleep_features(&[]);
        assert!(f.iter().all(|v| v.is_none()));
    }
}
