//! Event-based phone sensor features: screen interaction/unlock sessions,
//! battery charge sessions, Bluetooth scans split into own versus other
//! devices, calls, WiFi access points, and physical-activity samples.

use std::collections::BTreeMap;

use chrono::{NaiveDateTime, Timelike};

use crate::domain::{ActivityKind, CallKind, Epoch, Payload, ScreenEvent, SensorEvent};

use super::bouts::{max, mean, min, sample_std};

fn minute_of(t: NaiveDateTime) -> u32 {
    t.hour() * 60 + t.minute()
}

fn in_window(e: &SensorEvent, epoch: Epoch) -> bool {
    epoch.contains_minute(e.minute_of_day())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Session {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

impl Session {
    pub fn minutes(&self) -> f64 {
        (self.end - self.start).num_minutes().max(0) as f64
    }
}

/// Pair screen events into sessions over a whole stream. An interaction
/// session runs from an `on` to the first `off` or `lock`; an unlock
/// session from an `unlock` to the first `lock`. Unterminated sessions are
/// dropped.
pub fn screen_sessions(events: &[SensorEvent]) -> (Vec<Session>, Vec<Session>) {
    let mut interactions = Vec::new();
    let mut unlocks = Vec::new();
    let mut open_interaction: Option<NaiveDateTime> = None;
    let mut open_unlock: Option<NaiveDateTime> = None;
    for e in events {
        let Payload::Screen { event } = &e.payload else { continue };
        match event {
            ScreenEvent::On => {
                open_interaction.get_or_insert(e.timestamp);
            }
            ScreenEvent::Unlock => {
                open_unlock.get_or_insert(e.timestamp);
            }
            ScreenEvent::Lock => {
                if let Some(start) = open_unlock.take() {
                    unlocks.push(Session { start, end: e.timestamp });
                }
                if let Some(start) = open_interaction.take() {
                    interactions.push(Session { start, end: e.timestamp });
                }
            }
            ScreenEvent::Off => {
                if let Some(start) = open_interaction.take() {
                    interactions.push(Session { start, end: e.timestamp });
                }
            }
        }
    }
    (interactions, unlocks)
}

pub const SCREEN_NAMES: [&str; 15] = [
    "scr_interactions",
    "scr_interaction_min_sum",
    "scr_interaction_min_mean",
    "scr_interaction_min_std",
    "scr_interaction_min_max",
    "scr_interaction_min_min",
    "scr_unlock_sessions",
    "scr_unlock_min_sum",
    "scr_unlock_min_mean",
    "scr_unlock_min_std",
    "scr_unlock_min_max",
    "scr_unlock_min_min",
    "scr_unlocks_per_min",
    "scr_first_unlock_min",
    "scr_last_unlock_min",
];

/// Screen features for one day/epoch window. `day_events` is the day's
/// screen stream (for unlock-event counts and first/last times); sessions
/// are the participant's full-term sessions, attributed by start time.
pub fn screen_features(
    day_events: &[SensorEvent],
    interactions: &[Session],
    unlocks: &[Session],
    day: chrono::NaiveDate,
    epoch: Epoch,
) -> Vec<Option<f64>> {
    let (lo, hi) = epoch.window();
    let start = day.and_hms_opt(lo / 60, lo % 60, 0).expect("window start");
    let end = start + chrono::Duration::minutes((hi - lo) as i64);
    let starts_in = |s: &&Session| s.start >= start && s.start < end;

    let idur: Vec<f64> = interactions.iter().filter(starts_in).map(Session::minutes).collect();
    let udur: Vec<f64> = unlocks.iter().filter(starts_in).map(Session::minutes).collect();

    let unlock_events: Vec<u32> = day_events
        .iter()
        .filter(|e| {
            matches!(&e.payload, Payload::Screen { event: ScreenEvent::Unlock }) && in_window(e, epoch)
        })
        .map(|e| minute_of(e.timestamp))
        .collect();

    vec![
        Some(idur.len() as f64),
        Some(idur.iter().sum()),
        mean(&idur),
        sample_std(&idur),
        max(&idur),
        min(&idur),
        Some(udur.len() as f64),
        Some(udur.iter().sum()),
        mean(&udur),
        sample_std(&udur),
        max(&udur),
        min(&udur),
        Some(unlock_events.len() as f64 / epoch.len_minutes() as f64),
        unlock_events.first().map(|m| *m as f64),
        unlock_events.last().map(|m| *m as f64),
    ]
}

pub const BATTERY_NAMES: [&str; 2] = ["bat_charge_sessions", "bat_charge_min_total"];

/// Charge sessions pair a charging=true event with the next charging=false.
pub fn battery_sessions(events: &[SensorEvent]) -> Vec<Session> {
    let mut sessions = Vec::new();
    let mut open: Option<NaiveDateTime> = None;
    for e in events {
        let Payload::Battery { charging } = &e.payload else { continue };
        match (charging, open) {
            (true, None) => open = Some(e.timestamp),
            (false, Some(start)) => {
                sessions.push(Session { start, end: e.timestamp });
                open = None;
            }
            _ => {}
        }
    }
    sessions
}

pub fn battery_features(sessions: &[Session], day: chrono::NaiveDate, epoch: Epoch) -> Vec<Option<f64>> {
    let (lo, hi) = epoch.window();
    let start = day.and_hms_opt(lo / 60, lo % 60, 0).expect("window start");
    let end = start + chrono::Duration::minutes((hi - lo) as i64);
    let in_win: Vec<f64> = sessions
        .iter()
        .filter(|s| s.start >= start && s.start < end)
        .map(Session::minutes)
        .collect();
    vec![Some(in_win.len() as f64), Some(in_win.iter().sum())]
}

/// One-dimensional k-means with deterministic quantile seeding.
fn kmeans_1d(xs: &[f64], k: usize) -> Vec<usize> {
    assert!(k >= 1 && xs.len() >= k);
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mut centroids: Vec<f64> = (0..k)
        .map(|i| {
            let q = (i as f64 + 0.5) / k as f64;
            crate::domain::quantile_type7(&sorted, q)
        })
        .collect();
    let mut assign = vec![0usize; xs.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (i, &x) in xs.iter().enumerate() {
            let nearest = (0..k)
                .min_by(|&a, &b| {
                    (x - centroids[a])
                        .abs()
                        .partial_cmp(&(x - centroids[b]).abs())
                        .expect("finite")
                })
                .expect("k >= 1");
            if assign[i] != nearest {
                assign[i] = nearest;
                changed = true;
            }
        }
        for c in 0..k {
            let members: Vec<f64> = xs
                .iter()
                .zip(&assign)
                .filter(|(_, a)| **a == c)
                .map(|(x, _)| *x)
                .collect();
            if let Some(m) = mean(&members) {
                centroids[c] = m;
            }
        }
        if !changed {
            break;
        }
    }
    assign
}

/// Mean silhouette of a 1-D clustering; singleton clusters score 0.
fn silhouette_1d(xs: &[f64], assign: &[usize], k: usize) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = assign[i];
        let same: Vec<f64> = (0..n)
            .filter(|&j| j != i && assign[j] == own)
            .map(|j| (xs[i] - xs[j]).abs())
            .collect();
        if same.is_empty() {
            continue; // singleton contributes 0
        }
        let a = mean(&same).expect("nonempty");
        let mut b = f64::INFINITY;
        for c in 0..k {
            if c == own {
                continue;
            }
            let other: Vec<f64> = (0..n)
                .filter(|&j| assign[j] == c)
                .map(|j| (xs[i] - xs[j]).abs())
                .collect();
            if let Some(m) = mean(&other) {
                b = b.min(m);
            }
        }
        if b.is_finite() && a.max(b) > 0.0 {
            total += (b - a) / a.max(b);
        }
    }
    total / n as f64
}

/// Term-level Bluetooth device split. Devices are clustered on the log of
/// their total scan counts with k of 2 or 3, whichever separates better by
/// silhouette; the cluster with the highest mean frequency is the
/// participant's own ("self") devices.
#[derive(Debug, Clone, Default)]
pub struct BluetoothContext {
    pub self_devices: std::collections::BTreeSet<String>,
}

impl BluetoothContext {
    pub fn build(events: &[SensorEvent]) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for e in events {
            if let Payload::Bluetooth { address } = &e.payload {
                *counts.entry(address.as_str()).or_default() += 1;
            }
        }
        let devices: Vec<&str> = counts.keys().copied().collect();
        let xs: Vec<f64> = devices.iter().map(|d| (counts[d] as f64).ln()).collect();
        let mut self_devices = std::collections::BTreeSet::new();
        if devices.is_empty() {
            return Self { self_devices };
        }
        if devices.len() <= 2 {
            // too few devices to cluster: the most scanned one is "self"
            let best = devices
                .iter()
                .max_by_key(|d| counts[**d])
                .expect("nonempty");
            self_devices.insert(best.to_string());
            return Self { self_devices };
        }
        let mut best: Option<(f64, Vec<usize>, usize)> = None;
        for k in [2usize, 3] {
            if devices.len() < k {
                continue;
            }
            let assign = kmeans_1d(&xs, k);
            let score = silhouette_1d(&xs, &assign, k);
            let better = best.as_ref().map_or(true, |(s, ..)| score > *s);
            if better {
                best = Some((score, assign, k));
            }
        }
        let (_, assign, k) = best.expect("at least k=2 ran");
        let self_cluster = (0..k)
            .max_by(|&a, &b| {
                let ma = mean(
                    &xs.iter()
                        .zip(&assign)
                        .filter(|(_, c)| **c == a)
                        .map(|(x, _)| *x)
                        .collect::<Vec<_>>(),
                )
                .unwrap_or(f64::NEG_INFINITY);
                let mb = mean(
                    &xs.iter()
                        .zip(&assign)
                        .filter(|(_, c)| **c == b)
                        .map(|(x, _)| *x)
                        .collect::<Vec<_>>(),
                )
                .unwrap_or(f64::NEG_INFINITY);
                ma.partial_cmp(&mb).expect("finite")
            })
            .expect("k >= 2");
        for (d, c) in devices.iter().zip(&assign) {
            if *c == self_cluster {
                self_devices.insert(d.to_string());
            }
        }
        Self { self_devices }
    }

    pub fn is_self(&self, address: &str) -> bool {
        self.self_devices.contains(address)
    }
}

pub const BLUETOOTH_NAMES: [&str; 10] = [
    "bt_scans",
    "bt_unique_devices",
    "bt_scans_self",
    "bt_scans_others",
    "bt_unique_self",
    "bt_unique_others",
    "bt_most_freq_scans_self",
    "bt_least_freq_scans_self",
    "bt_most_freq_scans_others",
    "bt_least_freq_scans_others",
];

pub fn bluetooth_features(window_events: &[SensorEvent], ctx: &BluetoothContext) -> Vec<Option<f64>> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in window_events {
        if let Payload::Bluetooth { address } = &e.payload {
            *counts.entry(address.as_str()).or_default() += 1;
        }
    }
    let (mut self_scans, mut other_scans) = (0usize, 0usize);
    let mut self_counts = Vec::new();
    let mut other_counts = Vec::new();
    for (d, c) in &counts {
        if ctx.is_self(d) {
            self_scans += c;
            self_counts.push(*c as f64);
        } else {
            other_scans += c;
            other_counts.push(*c as f64);
        }
    }
    vec![
        Some((self_scans + other_scans) as f64),
        Some(counts.len() as f64),
        Some(self_scans as f64),
        Some(other_scans as f64),
        Some(self_counts.len() as f64),
        Some(other_counts.len() as f64),
        max(&self_counts),
        min(&self_counts),
        max(&other_counts),
        min(&other_counts),
    ]
}

pub const CALL_NAMES: [&str; 5] = [
    "call_in_count",
    "call_out_count",
    "call_missed_count",
    "call_in_min",
    "call_out_min",
];

pub fn call_features(window_events: &[SensorEvent]) -> Vec<Option<f64>> {
    let (mut n_in, mut n_out, mut n_missed) = (0.0, 0.0, 0.0);
    let (mut min_in, mut min_out) = (0.0, 0.0);
    for e in window_events {
        if let Payload::Call { kind, duration_min } = &e.payload {
            match kind {
                CallKind::Incoming => {
                    n_in += 1.0;
                    min_in += duration_min;
                }
                CallKind::Outgoing => {
                    n_out += 1.0;
                    min_out += duration_min;
                }
                CallKind::Missed => n_missed += 1.0,
            }
        }
    }
    vec![Some(n_in), Some(n_out), Some(n_missed), Some(min_in), Some(min_out)]
}

pub const WIFI_NAMES: [&str; 2] = ["wifi_unique_aps", "wifi_top_ap_scans"];

pub fn wifi_features(window_events: &[SensorEvent]) -> Vec<Option<f64>> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in window_events {
        if let Payload::Wifi { ap } = &e.payload {
            *counts.entry(ap.as_str()).or_default() += 1;
        }
    }
    let top = counts.values().max().map(|c| *c as f64);
    vec![Some(counts.len() as f64), top]
}

pub const ACTIVITY_NAMES: [&str; 8] = [
    "act_changes",
    "act_unique_kinds",
    "act_mc_still",
    "act_mc_tilting",
    "act_mc_on_foot",
    "act_mc_walking",
    "act_mc_running",
    "act_mc_on_bicycle",
];

pub fn activity_features(window_events: &[SensorEvent]) -> Vec<Option<f64>> {
    let kinds: Vec<ActivityKind> = window_events
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::Activity { kind } => Some(*kind),
            _ => None,
        })
        .collect();
    if kinds.is_empty() {
        return vec![Some(0.0), Some(0.0), None, None, None, None, None, None];
    }
    let changes = kinds.windows(2).filter(|w| w[0] != w[1]).count() as f64;
    let mut counts: BTreeMap<ActivityKind, usize> = BTreeMap::new();
    for k in &kinds {
        *counts.entry(*k).or_default() += 1;
    }
    // ties resolve to the first kind in enum order
    let most_common = ActivityKind::ALL
        .into_iter()
        .filter(|k| counts.contains_key(k))
        .max_by_key(|k| counts[k])
        .expect("nonempty");
    let mut out = vec![Some(changes), Some(counts.len() as f64)];
    for k in ActivityKind::ALL {
        out.push(Some(if k == most_common { 1.0 } else { 0.0 }));
    }
    out
}
