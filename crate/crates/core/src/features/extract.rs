//! Cohort-level feature extraction: runs every enabled feature family per
//! participant, day, and epoch, and assembles the daily feature matrix in
//! canonical order (participants, days, and feature names all sorted).
//!
//! A sensor with no events at all for a (participant, day) masks that
//! family's features for the whole day; within a day that has data, empty
//! epochs read as zero counts and masked statistics.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::io::Schedule;
use crate::domain::{DailyFeatureMatrix, Epoch, ParticipantId, Sensor, SensorEvent};

use super::events::{
    activity_features, battery_features, battery_sessions, bluetooth_features, call_features,
    screen_features, screen_sessions, wifi_features, BluetoothContext, ACTIVITY_NAMES,
    BATTERY_NAMES, BLUETOOTH_NAMES, CALL_NAMES, SCREEN_NAMES, WIFI_NAMES,
};
use super::fitbit::{sleep_features, step_features, SLEEP_NAMES, STEP_NAMES};
use super::geo::{PlaceLabel, PlaceMap};
use super::highlevel::{
    activity_samples, class_attendance, highlevel_epoch_features, party_minutes, HL_DAILY_NAMES,
    HL_EPOCH_NAMES,
};
use super::location::{location_features, LocationContext, LOCATION_NAMES};
use super::places::{assign_places, place_bouts, place_feature_names, place_features};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Activity,
    Battery,
    Bluetooth,
    Calls,
    Location,
    Places,
    Screen,
    Wifi,
    Sleep,
    Steps,
    HighLevel,
}

impl Family {
    pub const ALL: [Family; 11] = [
        Family::Activity,
        Family::Battery,
        Family::Bluetooth,
        Family::Calls,
        Family::Location,
        Family::Places,
        Family::Screen,
        Family::Wifi,
        Family::Sleep,
        Family::Steps,
        Family::HighLevel,
    ];
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractorConfig {
    pub dbscan_eps_m: f64,
    pub dbscan_min_pts: usize,
    pub static_speed_kmh: f64,
    pub gap_cap_min: f64,
    pub active_steps_per_min: u32,
    pub study_dwell_min: f64,
    pub party_dwell_min: f64,
    pub families: BTreeSet<Family>,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            dbscan_eps_m: 30.0,
            dbscan_min_pts: 5,
            static_speed_kmh: 1.0,
            gap_cap_min: 15.0,
            active_steps_per_min: 12,
            study_dwell_min: 20.0,
            party_dwell_min: 30.0,
            families: Family::ALL.into_iter().collect(),
        }
    }
}

fn family_names(family: Family) -> Vec<String> {
    let per_epoch = |names: &[&str]| -> Vec<String> {
        Epoch::ALL
            .iter()
            .flat_map(|e| names.iter().map(move |n| format!("{n}__{}", e.as_str())))
            .collect()
    };
    match family {
        Family::Activity => per_epoch(&ACTIVITY_NAMES),
        Family::Battery => per_epoch(&BATTERY_NAMES),
        Family::Bluetooth => per_epoch(&BLUETOOTH_NAMES),
        Family::Calls => per_epoch(&CALL_NAMES),
        Family::Location => per_epoch(&LOCATION_NAMES),
        Family::Places => {
            let names = place_feature_names();
            Epoch::ALL
                .iter()
                .flat_map(|e| names.iter().map(move |n| format!("{n}__{}", e.as_str())))
                .collect()
        }
        Family::Screen => per_epoch(&SCREEN_NAMES),
        Family::Wifi => per_epoch(&WIFI_NAMES),
        Family::Sleep => SLEEP_NAMES.iter().map(|n| format!("{n}__24hr")).collect(),
        Family::Steps => per_epoch(&STEP_NAMES),
        Family::HighLevel => {
            let mut names: Vec<String> = Epoch::ALL
                .iter()
                .flat_map(|e| HL_EPOCH_NAMES.iter().map(move |n| format!("{n}__{}", e.as_str())))
                .collect();
            names.extend(HL_DAILY_NAMES.iter().map(|n| format!("{n}__24hr")));
            names
        }
    }
}

/// Every feature name the given configuration emits, sorted.
pub fn feature_universe(cfg: &ExtractorConfig) -> Vec<String> {
    let mut names: Vec<String> = cfg.families.iter().flat_map(|f| family_names(*f)).collect();
    names.sort();
    names
}

struct ParticipantOutput {
    participant: ParticipantId,
    /// `[day][feature]`, aligned with the universe ordering.
    rows: Vec<Vec<Option<f64>>>,
}

/// Extract all configured features for one cohort.
pub fn extract_cohort(
    streams: &BTreeMap<ParticipantId, Vec<SensorEvent>>,
    place_map: &PlaceMap,
    schedule: &Schedule,
    days: &[NaiveDate],
    cfg: &ExtractorConfig,
) -> DailyFeatureMatrix {
    let universe = feature_universe(cfg);
    let name_pos: BTreeMap<&str, usize> =
        universe.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();

    let participants: Vec<&ParticipantId> = streams.keys().collect();
    let outputs: Vec<ParticipantOutput> = participants
        .par_iter()
        .map(|p| ParticipantOutput {
            participant: (*p).clone(),
            rows: extract_participant(&streams[*p], place_map, schedule.get(*p), days, cfg, &universe, &name_pos),
        })
        .collect();

    let mut matrix = DailyFeatureMatrix::new(
        participants.iter().map(|p| (*p).clone()).collect(),
        days.to_vec(),
        universe,
    )
    .expect("unique axes");
    for out in outputs {
        let p = matrix.participant_pos(&out.participant).expect("known participant");
        for (d, row) in out.rows.iter().enumerate() {
            for (f, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    matrix.set(p, d, f, *v);
                }
            }
        }
    }
    matrix
}

#[allow(clippy::too_many_arguments)]
fn extract_participant(
    events: &[SensorEvent],
    place_map: &PlaceMap,
    schedule: Option<&Vec<crate::domain::io::ClassBlock>>,
    days: &[NaiveDate],
    cfg: &ExtractorConfig,
    universe: &[String],
    name_pos: &BTreeMap<&str, usize>,
) -> Vec<Vec<Option<f64>>> {
    let mut by_sensor: BTreeMap<Sensor, Vec<SensorEvent>> = BTreeMap::new();
    for e in events {
        by_sensor.entry(e.sensor()).or_default().push(e.clone());
    }
    let empty: Vec<SensorEvent> = Vec::new();
    let stream = |s: Sensor| by_sensor.get(&s).unwrap_or(&empty);

    let has = |f: Family| cfg.families.contains(&f);
    let need_location = has(Family::Location) || has(Family::Places) || has(Family::HighLevel);

    let loc_ctx = need_location.then(|| {
        let mut ctx = LocationContext::build(
            stream(Sensor::Location),
            days,
            cfg.static_speed_kmh,
            cfg.gap_cap_min,
            cfg.dbscan_eps_m,
            cfg.dbscan_min_pts,
        );
        assign_places(&mut ctx.samples, place_map);
        ctx
    });
    let all_place_bouts = loc_ctx
        .as_ref()
        .map(|ctx| place_bouts(&ctx.samples, place_map))
        .unwrap_or_default();
    let is_frat_resident = loc_ctx
        .as_ref()
        .and_then(|ctx| ctx.home)
        .map(|home| {
            place_map
                .locate(home)
                .is_some_and(|pl| pl.label == PlaceLabel::Frat)
        })
        .unwrap_or(false);

    let bt_ctx = has(Family::Bluetooth).then(|| BluetoothContext::build(stream(Sensor::Bluetooth)));
    let (interactions, unlocks) = if has(Family::Screen) {
        screen_sessions(stream(Sensor::Screen))
    } else {
        (Vec::new(), Vec::new())
    };
    let charge_sessions = if has(Family::Battery) {
        battery_sessions(stream(Sensor::Battery))
    } else {
        Vec::new()
    };
    let acts = if has(Family::HighLevel) {
        activity_samples(stream(Sensor::Activity), cfg.gap_cap_min)
    } else {
        Vec::new()
    };

    let mut rows: Vec<Vec<Option<f64>>> = vec![vec![None; universe.len()]; days.len()];

    for (d, &day) in days.iter().enumerate() {
        let day_has = |s: Sensor| {
            let st = stream(s);
            !crate::domain::slice_epoch(st, day, Epoch::FullDay).is_empty()
        };
        let write = |row: &mut Vec<Option<f64>>, name: &str, epoch: Epoch, v: Option<f64>| {
            let key = format!("{name}__{}", epoch.as_str());
            if let Some(&i) = name_pos.get(key.as_str()) {
                row[i] = v;
            }
        };

        // row is re-borrowed per family block to appease the borrow checker
        for epoch in Epoch::ALL {
            if has(Family::Activity) && day_has(Sensor::Activity) {
                let window = crate::domain::slice_epoch(stream(Sensor::Activity), day, epoch);
                let vals = activity_features(window);
                let mut row = std::mem::take(&mut rows[d]);
                for (n, v) in ACTIVITY_NAMES.iter().zip(vals) {
                    write(&mut row, n, epoch, v);
                }
                rows[d] = row;
            }
            if has(Family::Battery) && day_has(Sensor::Battery) {
                let vals = battery_features(&charge_sessions, day, epoch);
                let mut row = std::mem::take(&mut rows[d]);
                for (n, v) in BATTERY_NAMES.iter().zip(vals) {
                    write(&mut row, n, epoch, v);
                }
                rows[d] = row;
            }
            if has(Family::Bluetooth) && day_has(Sensor::Bluetooth) {
                let window = crate::domain::slice_epoch(stream(Sensor::Bluetooth), day, epoch);
                let vals = bluetooth_features(window, bt_ctx.as_ref().expect("built"));
                let mut row = std::mem::take(&mut rows[d]);
                for (n, v) in BLUETOOTH_NAMES.iter().zip(vals) {
                    write(&mut row, n, epoch, v);
                }
                rows[d] = row;
            }
            if has(Family::Calls) && day_has(Sensor::Call) {
                let window = crate::domain::slice_epoch(stream(Sensor::Call), day, epoch);
                let vals = call_features(window);
                let mut row = std::mem::take(&mut rows[d]);
                for (n, v) in CALL_NAMES.iter().zip(vals) {
                    write(&mut row, n, epoch, v);
                }
                rows[d] = row;
            }
            if has(Family::Location) && day_has(Sensor::Location) {
                let ctx = loc_ctx.as_ref().expect("built");
                let vals = location_features(ctx, days, d, epoch);
                let mut row = std::mem::take(&mut rows[d]);
                for (n, v) in LOCATION_NAMES.iter().zip(vals) {
                    write(&mut row, n, epoch, v);
                }
                rows[d] = row;
            }
            if has(Family::Places) && day_has(Sensor::Location) {
                let ctx = loc_ctx.as_ref().expect("built");
                let vals = place_features(ctx.day_samples(day), &all_place_bouts, place_map, day, epoch);
                let names = place_feature_names();
                let mut row = std::mem::take(&mut rows[d]);
                for (n, v) in names.iter().zip(vals) {
                    write(&mut row, n, epoch, v);
                }
                rows[d] = row;
            }
            if has(Family::Screen) && day_has(Sensor::Screen) {
                let day_events = crate::domain::slice_epoch(stream(Sensor::Screen), day, Epoch::FullDay);
                let vals = screen_features(day_events, &interactions, &unlocks, day, epoch);
                let mut row = std::mem::take(&mut rows[d]);
                for (n, v) in SCREEN_NAMES.iter().zip(vals) {
                    write(&mut row, n, epoch, v);
                }
                rows[d] = row;
            }
            if has(Family::Wifi) && day_has(Sensor::Wifi) {
                let window = crate::domain::slice_epoch(stream(Sensor::Wifi), day, epoch);
                let vals = wifi_features(window);
                let mut row = std::mem::take(&mut rows[d]);
                for (n, v) in WIFI_NAMES.iter().zip(vals) {
                    write(&mut row, n, epoch, v);
                }
                rows[d] = row;
            }
            if has(Family::Steps) && day_has(Sensor::StepMinute) {
                let window = crate::domain::slice_epoch(stream(Sensor::StepMinute), day, epoch);
                let vals = step_features(window, cfg.active_steps_per_min);
                let mut row = std::mem::take(&mut rows[d]);
                for (n, v) in STEP_NAMES.iter().zip(vals) {
                    write(&mut row, n, epoch, v);
                }
                rows[d] = row;
            }
            if has(Family::HighLevel) {
                let have_location = loc_ctx.is_some() && day_has(Sensor::Location);
                let have_activity = day_has(Sensor::Activity);
                if have_location || have_activity {
                    let empty_samples = [];
                    let day_samples = loc_ctx
                        .as_ref()
                        .map(|c| c.day_samples(day))
                        .unwrap_or(&empty_samples);
                    let vals = highlevel_epoch_features(
                        day_samples,
                        &all_place_bouts,
                        &acts,
                        place_map,
                        day,
                        epoch,
                        cfg.study_dwell_min,
                        have_location,
                        have_activity,
                    );
                    let mut row = std::mem::take(&mut rows[d]);
                    for (n, v) in HL_EPOCH_NAMES.iter().zip(vals) {
                        write(&mut row, n, epoch, v);
                    }
                    rows[d] = row;
                }
            }
        }

        if has(Family::Sleep) && day_has(Sensor::SleepMinute) {
            let day_events = crate::domain::slice_epoch(stream(Sensor::SleepMinute), day, Epoch::FullDay);
            let vals = sleep_features(day_events);
            let mut row = std::mem::take(&mut rows[d]);
            for (n, v) in SLEEP_NAMES.iter().zip(vals) {
                write(&mut row, n, Epoch::FullDay, v);
            }
            rows[d] = row;
        }

        if has(Family::HighLevel) && day_has(Sensor::Location) {
            let ctx = loc_ctx.as_ref().expect("built");
            let party = party_minutes(&ctx.samples, &all_place_bouts, day, cfg.party_dwell_min, is_frat_resident);
            let attendance =
                schedule.and_then(|s| class_attendance(ctx.day_samples(day), s, place_map, day));
            let mut row = std::mem::take(&mut rows[d]);
            write(&mut row, "hl_party_min", Epoch::FullDay, Some(party));
            write(
                &mut row,
                "hl_class_att_pct",
                Epoch::FullDay,
                attendance.map(|a| a.pct_time_in_class),
            );
            write(
                &mut row,
                "hl_class_att_frac",
                Epoch::FullDay,
                attendance.map(|a| a.attended_fraction),
            );
            rows[d] = row;
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Payload, ScreenEvent};

    #[test]
    fn universe_is_sorted_and_unique() {
        let cfg = ExtractorConfig::default();
        let u = feature_universe(&cfg);
        let mut sorted = u.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(u, sorted);
        assert!(u.iter().any(|n| n == "slp_asleep_min__24hr"));
        assert!(!u.iter().any(|n| n == "slp_asleep_min__morning"));
        assert!(u.iter().any(|n| n == "hl_party_min__24hr"));
        assert!(!u.iter().any(|n| n == "hl_party_min__morning"));
    }

    #[test]
    fn missing_sensor_day_is_fully_masked() {
        let day = NaiveDate::from_ymd_opt(2018, 4, 2).unwrap();
        let day2 = NaiveDate::from_ymd_opt(2018, 4, 3).unwrap();
        let p = ParticipantId::from("p1");
        // screen data on day 1 only
        let events = vec![
            SensorEvent::new(p.clone(), day.and_hms_opt(10, 0, 0).unwrap(), Payload::Screen { event: ScreenEvent::On }),
            SensorEvent::new(p.clone(), day.and_hms_opt(10, 5, 0).unwrap(), Payload::Screen { event: ScreenEvent::Off }),
        ];
        let mut streams = BTreeMap::new();
        streams.insert(p.clone(), events);
        let cfg = ExtractorConfig {
            families: [Family::Screen].into(),
            ..Default::default()
        };
        let m = extract_cohort(&streams, &PlaceMap::default(), &BTreeMap::new(), &[day, day2], &cfg);
        let f = m.feature_pos("scr_interactions__24hr").unwrap();
        assert_eq!(m.get(0, 0, f), Some(1.0));
        assert_eq!(m.get(0, 1, f), None);
        let f_night = m.feature_pos("scr_interactions__night").unwrap();
        // day has screen data, night epoch has none: observed zero
        assert_eq!(m.get(0, 0, f_night), Some(0.0));
    }

    #[test]
    fn extraction_is_deterministic_across_thread_counts() {
        let day = NaiveDate::from_ymd_opt(2018, 4, 2).unwrap();
        let mut streams: BTreeMap<ParticipantId, Vec<SensorEvent>> = BTreeMap::new();
        for pi in 0..6 {
            let p = ParticipantId::new(format!("p{pi}"));
            let mut ev = Vec::new();
            for m in 0..240 {
                ev.push(SensorEvent::new(
                    p.clone(),
                    day.and_hms_opt(8 + m / 60, m % 60, 0).unwrap(),
                    Payload::StepMinute { steps: ((m * (pi + 2)) % 31) as u32 },
                ));
            }
            streams.insert(p, ev);
        }
        let cfg = ExtractorConfig {
            families: [Family::Steps].into(),
            ..Default::default()
        };
        let a = extract_cohort(&streams, &PlaceMap::default(), &BTreeMap::new(), &[day], &cfg);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| extract_cohort(&streams, &PlaceMap::default(), &BTreeMap::new(), &[day], &cfg));
        for p in 0..a.n_participants() {
            for f in 0..a.n_features() {
                assert_eq!(a.get(p, 0, f), b.get(p, 0, f));
            }
        }
    }
}
