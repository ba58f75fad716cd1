//! High-level academic behaviors fusing location, activity, schedule, and
//! the place map: activity duration, study duration and focus, dorm time,
//! party attendance, indoor/outdoor mobility, and class attendance.

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};

use crate::domain::io::ClassBlock;
use crate::domain::{ActivityKind, Epoch, Payload, SensorEvent};

use super::geo::{haversine_m, PlaceLabel, PlaceMap};
use super::location::LocationSample;
use super::places::PlaceBout;

pub const HL_EPOCH_NAMES: [&str; 6] = [
    "hl_activity_min",
    "hl_study_min",
    "hl_study_focus",
    "hl_dorm_min",
    "hl_indoor_mobility_min",
    "hl_outdoor_distance_m",
];

pub const HL_DAILY_NAMES: [&str; 3] = ["hl_party_min", "hl_class_att_pct", "hl_class_att_frac"];

/// Weighted activity state samples for fusion with location.
#[derive(Debug, Clone, Copy)]
pub struct ActivitySample {
    pub t: NaiveDateTime,
    pub kind: ActivityKind,
    pub weight_min: f64,
}

pub fn activity_samples(events: &[SensorEvent], gap_cap_min: f64) -> Vec<ActivitySample> {
    let raw: Vec<(NaiveDateTime, ActivityKind)> = events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::Activity { kind } => Some((e.timestamp, *kind)),
            _ => None,
        })
        .collect();
    raw.iter()
        .enumerate()
        .map(|(i, &(t, kind))| {
            let weight_min = match raw.get(i + 1) {
                Some(&(next, _)) => ((next - t).num_minutes().max(0) as f64).min(gap_cap_min),
                None => 1.0,
            };
            ActivitySample { t, kind, weight_min }
        })
        .collect()
}

/// Activity state at a given instant: the latest sample no more than
/// `max_gap_min` old.
pub fn activity_at(samples: &[ActivitySample], t: NaiveDateTime, max_gap_min: i64) -> Option<ActivityKind> {
    let idx = samples.partition_point(|s| s.t <= t);
    if idx == 0 {
        return None;
    }
    let s = &samples[idx - 1];
    ((t - s.t).num_minutes() <= max_gap_min).then_some(s.kind)
}

fn window_bounds(day: NaiveDate, epoch: Epoch) -> (NaiveDateTime, NaiveDateTime) {
    let (lo, hi) = epoch.window();
    let start = day.and_hms_opt(lo / 60, lo % 60, 0).expect("window");
    (start, start + chrono::Duration::minutes((hi - lo) as i64))
}

fn minute_in_epoch(t: NaiveDateTime, epoch: Epoch) -> bool {
    epoch.contains_minute(t.hour() * 60 + t.minute())
}

/// The six per-epoch high-level features for one day/epoch window.
#[allow(clippy::too_many_arguments)]
pub fn highlevel_epoch_features(
    day_samples: &[LocationSample],
    bouts: &[PlaceBout],
    acts: &[ActivitySample],
    map: &PlaceMap,
    day: NaiveDate,
    epoch: Epoch,
    study_dwell_min: f64,
    have_location: bool,
    have_activity: bool,
) -> Vec<Option<f64>> {
    // activity duration: dwell of non-stationary activity samples
    let hl_activity = have_activity.then(|| {
        acts.iter()
            .filter(|a| a.t.date() == day && minute_in_epoch(a.t, epoch) && a.kind.is_moving())
            .map(|a| a.weight_min)
            .sum::<f64>()
    });

    if !have_location {
        return vec![hl_activity, None, None, None, None, None];
    }

    let (w_start, w_end) = window_bounds(day, epoch);

    // study duration: in-window dwell belonging to study bouts of >= the
    // dwell threshold; focus: stationary fraction of that dwell
    let mut study_total = 0.0;
    let mut study_stationary = 0.0;
    for b in bouts {
        if b.label != Some(PlaceLabel::Study) || b.dwell_min < study_dwell_min {
            continue;
        }
        for s in day_samples {
            if s.t < b.start || s.t > b.end || s.t < w_start || s.t >= w_end {
                continue;
            }
            if s.place != b.place {
                continue;
            }
            study_total += s.weight_min;
            match activity_at(acts, s.t, 5) {
                Some(ActivityKind::Still) | Some(ActivityKind::Tilting) | None => {
                    study_stationary += s.weight_min
                }
                _ => {}
            }
        }
    }
    let hl_study_focus = (study_total > 0.0).then(|| study_stationary / study_total);

    let mut dorm = 0.0;
    let mut indoor_mobility = 0.0;
    for s in day_samples {
        if s.t < w_start || s.t >= w_end {
            continue;
        }
        if let Some(pi) = s.place {
            if map.places[pi].label == PlaceLabel::Living {
                dorm += s.weight_min;
            }
            if have_activity {
                if let Some(kind) = activity_at(acts, s.t, 5) {
                    if matches!(
                        kind,
                        ActivityKind::Walking | ActivityKind::Running | ActivityKind::OnFoot
                    ) {
                        indoor_mobility += s.weight_min;
                    }
                }
            }
        }
    }

    // outdoor distance: consecutive in-window pairs both outside any polygon
    let mut outdoor_distance = 0.0;
    for w in day_samples.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if a.place.is_none() && b.place.is_none() && a.t >= w_start && b.t < w_end {
            outdoor_distance += haversine_m((a.lat, a.lon), (b.lat, b.lon));
        }
    }

    vec![
        hl_activity,
        Some(study_total),
        hl_study_focus,
        Some(dorm),
        have_activity.then_some(indoor_mobility),
        Some(outdoor_distance),
    ]
}

/// Party time for day D: dwell of fraternity-place bouts of at least the
/// party threshold, restricted to the window [D 18:00, D+1 12:00).
/// Residents of a fraternity house score 0 by definition.
pub fn party_minutes(
    all_samples: &[LocationSample],
    bouts: &[PlaceBout],
    day: NaiveDate,
    party_dwell_min: f64,
    is_frat_resident: bool,
) -> f64 {
    if is_frat_resident {
        return 0.0;
    }
    let w_start = day.and_hms_opt(18, 0, 0).expect("6pm");
    let w_end = (day + chrono::Duration::days(1)).and_hms_opt(12, 0, 0).expect("noon");
    let mut total = 0.0;
    for b in bouts {
        if b.label != Some(PlaceLabel::Frat) || b.dwell_min < party_dwell_min {
            continue;
        }
        if b.end < w_start || b.start >= w_end {
            continue;
        }
        // in-window share of the bout's dwell
        total += all_samples
            .iter()
            .filter(|s| s.place == b.place && s.t >= b.start && s.t <= b.end && s.t >= w_start && s.t < w_end)
            .map(|s| s.weight_min)
            .sum::<f64>();
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attendance {
    /// Minutes at the correct building over total scheduled minutes.
    pub pct_time_in_class: f64,
    /// Attended classes (more than half the class spent at the building)
    /// over scheduled classes.
    pub attended_fraction: f64,
}

/// Class attendance for one day against that weekday's schedule. `None`
/// when no classes are scheduled that day.
pub fn class_attendance(
    day_samples: &[LocationSample],
    schedule: &[ClassBlock],
    map: &PlaceMap,
    day: NaiveDate,
) -> Option<Attendance> {
    let today: Vec<&ClassBlock> = schedule.iter().filter(|c| c.weekday == day.weekday()).collect();
    if today.is_empty() {
        return None;
    }
    let mut scheduled_min = 0.0;
    let mut at_building_min = 0.0;
    let mut attended = 0usize;
    for class in &today {
        let start = day
            .and_hms_opt(class.start_min / 60, class.start_min % 60, 0)
            .expect("schedule time");
        let end = day
            .and_hms_opt(class.end_min / 60, class.end_min % 60, 0)
            .expect("schedule time");
        let duration = (class.end_min - class.start_min) as f64;
        scheduled_min += duration;
        let Some(building) = map.by_id(&class.building) else {
            continue;
        };
        let minutes: f64 = day_samples
            .iter()
            .filter(|s| s.t >= start && s.t < end && building.contains((s.lat, s.lon)))
            .map(|s| s.weight_min)
            .sum();
        at_building_min += minutes;
        if minutes / duration > 0.5 {
            attended += 1;
        }
    }
    Some(Attendance {
        pct_time_in_class: at_building_min / scheduled_min,
        attended_fraction: attended as f64 / today.len() as f64,
    })
}
