//! Weekly behavioral-change features: first-half / second-half / whole-week
//! least-squares slopes with Thursday as the midpoint, and the two-segment
//! breakpoint where a series changes slope direction.

use chrono::Weekday;
use serde::{Deserialize, Serialize};

/// Slopes are units/day over a Monday-start week; the breakpoint, when one
/// exists, is the interior day (Tue..Sat) with the directional change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehavioralChange {
    pub first_half_slope: Option<f64>,
    pub second_half_slope: Option<f64>,
    pub slope_all: Option<f64>,
    pub breakpoint: Option<Breakpoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub day: Weekday,
    /// Offset of the breakpoint day within the week, 1..=5.
    pub day_index: usize,
    pub slope_before: f64,
    pub slope_after: f64,
}

/// Least-squares slope of `(x, y)` points with missing `y` skipped.
/// `None` below two observed points or when all observed `x` coincide.
pub fn ls_slope(points: &[(f64, Option<f64>)]) -> Option<f64> {
    let obs: Vec<(f64, f64)> = points.iter().filter_map(|(x, y)| y.map(|y| (*x, y))).collect();
    if obs.len() < 2 {
        return None;
    }
    let n = obs.len() as f64;
    let mx = obs.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = obs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = obs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = obs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

fn segment_sse(points: &[(f64, Option<f64>)]) -> Option<f64> {
    let obs: Vec<(f64, f64)> = points.iter().filter_map(|(x, y)| y.map(|y| (*x, y))).collect();
    if obs.len() < 2 {
        return None;
    }
    let slope = ls_slope(points)?;
    let n = obs.len() as f64;
    let mx = obs.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = obs.iter().map(|(_, y)| y).sum::<f64>() / n;
    let intercept = my - slope * mx;
    Some(
        obs.iter()
            .map(|(x, y)| {
                let r = y - (slope * x + intercept);
                r * r
            })
            .sum(),
    )
}

const WEEKDAYS: [Weekday; 7] = [
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
    Weekday::Sat,
    Weekday::Sun,
];

/// Analyze one week of daily values, Monday first.
///
/// First-half slope covers Mon-Wed (midpoint excluded), second-half Thu-Sun
/// (midpoint included). The breakpoint candidate set is Tue..Sat; each
/// candidate splits the week into `[Mon..=day]` and `[day..=Sun]` segments
/// sharing the candidate day, the winner minimizes summed segment SSE, and
/// a breakpoint is only reported when its two segment slopes differ in
/// sign. Slopes need two observed points per segment; missing days simply
/// drop out.
pub fn behavioral_change(week: &[Option<f64>; 7]) -> BehavioralChange {
    let pts: Vec<(f64, Option<f64>)> = week.iter().enumerate().map(|(i, v)| (i as f64, *v)).collect();

    let first_half_slope = ls_slope(&pts[0..3]);
    let second_half_slope = ls_slope(&pts[3..7]);
    let slope_all = ls_slope(&pts);

    let mut best: Option<(f64, usize, f64, f64)> = None;
    for b in 1..=5usize {
        let before = &pts[0..=b];
        let after = &pts[b..7];
        let (Some(sse_b), Some(sse_a)) = (segment_sse(before), segment_sse(after)) else {
            continue;
        };
        let (Some(slope_b), Some(slope_a)) = (ls_slope(before), ls_slope(after)) else {
            continue;
        };
        let sse = sse_b + sse_a;
        // ties (including float-noise ties between mathematically equal
        // fits) resolve to the earliest interior day
        let better = match best {
            None => true,
            Some((best_sse, ..)) => sse < best_sse - 1e-9 * (1.0 + best_sse.abs()),
        };
        if better {
            best = Some((sse, b, slope_b, slope_a));
        }
    }

    let breakpoint = best.and_then(|(_, day_index, slope_before, slope_after)| {
        (slope_before * slope_after < 0.0).then_some(Breakpoint {
            day: WEEKDAYS[day_index],
            day_index,
            slope_before,
            slope_after,
        })
    });

    BehavioralChange {
        first_half_slope,
        second_half_slope,
        slope_all,
        breakpoint,
    }
}

/// Weekly mean and sample standard deviation over the non-missing days.
/// The mean needs one observation, the std two.
pub fn weekly_aggregate(days: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let obs: Vec<f64> = days.iter().flatten().copied().collect();
    (super::bouts::mean(&obs), super::bouts::sample_std(&obs))
}
