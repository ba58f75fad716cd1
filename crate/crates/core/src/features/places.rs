//! Dwell features at hand-labeled campus places, from location samples
//! mapped into the place map's polygons and grouped into bouts.

use chrono::{NaiveDate, NaiveDateTime, Timelike};

use crate::domain::Epoch;

use super::geo::{PlaceLabel, PlaceMap};
use super::location::LocationSample;

/// A maximal run of consecutive samples sharing one place (or all outside).
#[derive(Debug, Clone, PartialEq)]
pub struct PlaceBout {
    pub place: Option<usize>,
    pub label: Option<PlaceLabel>,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub dwell_min: f64,
}

/// Assign each sample its place index (stored on the sample) and group
/// consecutive same-place samples into bouts.
pub fn assign_places(samples: &mut [LocationSample], map: &PlaceMap) {
    for s in samples.iter_mut() {
        s.place = map
            .places
            .iter()
            .position(|p| p.contains((s.lat, s.lon)));
    }
}

pub fn place_bouts(samples: &[LocationSample], map: &PlaceMap) -> Vec<PlaceBout> {
    let mut bouts: Vec<PlaceBout> = Vec::new();
    for s in samples {
        match bouts.last_mut() {
            Some(b) if b.place == s.place => {
                b.end = s.t;
                b.dwell_min += s.weight_min;
            }
            _ => bouts.push(PlaceBout {
                place: s.place,
                label: s.place.map(|i| map.places[i].label),
                start: s.t,
                end: s.t,
                dwell_min: s.weight_min,
            }),
        }
    }
    bouts
}

pub fn place_feature_names() -> Vec<String> {
    let mut names = Vec::new();
    for label in PlaceLabel::ALL {
        names.push(format!("place_{}_min", label.as_str()));
        names.push(format!("place_{}_bouts", label.as_str()));
        names.push(format!("place_{}_bouts_ge10", label.as_str()));
        names.push(format!("place_{}_bouts_ge30", label.as_str()));
    }
    names.push("place_outside_min".to_string());
    names
}

/// Per-window dwell minutes use sample weights inside the window; bout
/// counts attribute each bout to the window containing its start, with the
/// duration thresholds applied to the whole bout.
pub fn place_features(
    day_samples: &[LocationSample],
    bouts: &[PlaceBout],
    map: &PlaceMap,
    day: NaiveDate,
    epoch: Epoch,
) -> Vec<Option<f64>> {
    let (lo, hi) = epoch.window();
    let w_start = day.and_hms_opt(lo / 60, lo % 60, 0).expect("window");
    let w_end = w_start + chrono::Duration::minutes((hi - lo) as i64);

    let mut minutes = [0.0f64; PlaceLabel::ALL.len()];
    let mut outside = 0.0f64;
    for s in day_samples {
        let m = s.t.hour() * 60 + s.t.minute();
        if m < lo || m >= hi {
            continue;
        }
        match s.place {
            Some(i) => {
                let label = map.places[i].label;
                let k = PlaceLabel::ALL.iter().position(|l| *l == label).expect("fixed set");
                minutes[k] += s.weight_min;
            }
            None => outside += s.weight_min,
        }
    }

    let mut n_bouts = [0usize; PlaceLabel::ALL.len()];
    let mut n_ge10 = [0usize; PlaceLabel::ALL.len()];
    let mut n_ge30 = [0usize; PlaceLabel::ALL.len()];
    for b in bouts {
        let Some(label) = b.label else { continue };
        if b.start < w_start || b.start >= w_end {
            continue;
        }
        let k = PlaceLabel::ALL.iter().position(|l| *l == label).expect("fixed set");
        n_bouts[k] += 1;
        if b.dwell_min >= 10.0 {
            n_ge10[k] += 1;
        }
        if b.dwell_min >= 30.0 {
            n_ge30[k] += 1;
        }
    }

    let mut out = Vec::with_capacity(25);
    for k in 0..PlaceLabel::ALL.len() {
        out.push(Some(minutes[k]));
        out.push(Some(n_bouts[k] as f64));
        out.push(Some(n_ge10[k] as f64));
        out.push(Some(n_ge30[k] as f64));
    }
    out.push(Some(outside));
    out
}
