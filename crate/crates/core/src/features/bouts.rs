//! Maximal runs of consecutive same-state minute samples. Used for sleep
//! status bouts and active/sedentary step bouts.

use chrono::NaiveDateTime;

/// A maximal run of minute samples sharing one state. `end` is exclusive:
/// a bout over minutes t, t+1 has `end = t+2min` and length 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinuteBout<S> {
    pub state: S,
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    pub len_min: u32,
}

/// Group minute-resolution samples into maximal bouts. Samples must be
/// time-sorted; a gap of more than one minute always breaks the bout, so
/// adjacent bouts either differ in state or are separated by missing
/// minutes.
pub fn minute_bouts<S: Copy + Eq>(samples: &[(NaiveDateTime, S)]) -> Vec<MinuteBout<S>> {
    let mut bouts: Vec<MinuteBout<S>> = Vec::new();
    for &(t, state) in samples {
        match bouts.last_mut() {
            Some(b) if b.state == state && t == b.end => {
                b.end = t + chrono::Duration::minutes(1);
                b.len_min += 1;
            }
            _ => bouts.push(MinuteBout {
                state,
                start: t,
                end: t + chrono::Duration::minutes(1),
                len_min: 1,
            }),
        }
    }
    bouts
}

/// Sample mean; `None` on empty input.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Sample (n-1) standard deviation; `None` below two values.
pub fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let m = mean(values).expect("nonempty");
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}

pub fn max(values: &[f64]) -> Option<f64> {
    values.iter().copied().reduce(f64::max)
}

pub fn min(values: &[f64]) -> Option<f64> {
    values.iter().copied().reduce(f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn t(min: i64) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2018, 4, 2)
            .unwrap()
            .and_hms_opt(10, 0, 0)
            .unwrap()
            + chrono::Duration::minutes(min)
    }

    #[test]
    fn groups_consecutive_same_state() {
        let samples = vec![
            (t(0), true),
            (t(1), true),
            (t(2), false),
            (t(3), true),
            (t(4), true),
            (t(5), true),
        ];
        let bouts = minute_bouts(&samples);
        assert_eq!(bouts.len(), 3);
        assert_eq!(bouts[0].len_min, 2);
        assert_eq!(bouts[1].len_min, 1);
        assert_eq!(bouts[2].len_min, 3);
    }

    #[test]
    fn time_gap_breaks_bout() {
        let samples = vec![(t(0), true), (t(1), true), (t(5), true)];
        let bouts = minute_bouts(&samples);
        assert_eq!(bouts.len(), 2);
        assert_eq!(bouts[0].len_min, 2);
        assert_eq!(bouts[1].len_min, 1);
    }

    #[test]
    fn adjacent_bouts_never_share_state() {
        // maximality: any two bouts touching in time differ in state
        let samples: Vec<(NaiveDateTime, u8)> =
            (0..40).map(|i| (t(i), [0, 0, 1, 1, 1, 2, 0, 1][i as usize % 8])).collect();
        let bouts = minute_bouts(&samples);
        for w in bouts.windows(2) {
            if w[0].end == w[1].start {
                assert_ne!(w[0].state, w[1].state);
            }
        }
        let total: u32 = bouts.iter().map(|b| b.len_min).sum();
        assert_eq!(total, 40);
    }

    #[test]
    fn stats_conventions() {
        assert_eq!(mean(&[2.0, 4.0, 6.0]), Some(4.0));
        assert_eq!(sample_std(&[2.0, 4.0, 6.0]), Some(2.0));
        assert_eq!(sample_std(&[5.0]), None);
        assert_eq!(mean(&[]), None);
    }
}
