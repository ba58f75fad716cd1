//! Weekly tabular assembly for the LR path: common cleaning, weekly
//! mean/std aggregation, behavioral-change features, and one-hot-encoded
//! self-reports, in canonical sorted-column order.

use crate::domain::{
    cap_matrix_outliers, drop_all_missing, one_hot, DailyFeatureMatrix, ParticipantId,
};
use crate::features::{behavioral_change, weekly_aggregate};
use crate::synth::SelfReportTable;

/// Participant-rows by feature-columns matrix with missing cells.
#[derive(Debug, Clone)]
pub struct WeeklyMatrix {
    pub participants: Vec<ParticipantId>,
    pub columns: Vec<String>,
    /// `rows[participant][column]`.
    pub rows: Vec<Vec<Option<f64>>>,
}

impl WeeklyMatrix {
    pub fn column_pos(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Build the week-1 feature table: per daily feature, the weekly mean and
/// sample std plus the five behavioral-change features, then self-report
/// columns (categoricals one-hot encoded). Common cleaning (per-participant
/// IQR capping and all-missing removal) runs first; columns that end up
/// fully missing are dropped.
pub fn weekly_matrix(daily: &DailyFeatureMatrix, self_reports: &SelfReportTable) -> WeeklyMatrix {
    let mut cleaned = daily.clone();
    cap_matrix_outliers(&mut cleaned);
    let cleaned = drop_all_missing(&cleaned);

    let participants = cleaned.participants().to_vec();
    let week_days = cleaned.n_days().min(7);

    let mut columns: Vec<(String, Vec<Option<f64>>)> = Vec::new();
    for f in 0..cleaned.n_features() {
        let name = &cleaned.features()[f];
        let mut wk_mean = Vec::with_capacity(participants.len());
        let mut wk_std = Vec::with_capacity(participants.len());
        let mut s_fh = Vec::with_capacity(participants.len());
        let mut s_sh = Vec::with_capacity(participants.len());
        let mut s_all = Vec::with_capacity(participants.len());
        let mut bkp_before = Vec::with_capacity(participants.len());
        let mut bkp_after = Vec::with_capacity(participants.len());
        for p in 0..participants.len() {
            let series = cleaned.series(p, f);
            let week = &series[..week_days];
            let (mean, std) = weekly_aggregate(week);
            wk_mean.push(mean);
            wk_std.push(std);
            let mut seven = [None; 7];
            seven[..week_days].copy_from_slice(&week[..week_days]);
            let change = behavioral_change(&seven);
            s_fh.push(change.first_half_slope);
            s_sh.push(change.second_half_slope);
            s_all.push(change.slope_all);
            bkp_before.push(change.breakpoint.map(|b| b.slope_before));
            bkp_after.push(change.breakpoint.map(|b| b.slope_after));
        }
        columns.push((format!("{name}__wkmean"), wk_mean));
        columns.push((format!("{name}__wkstd"), wk_std));
        columns.push((format!("{name}__slope_fh"), s_fh));
        columns.push((format!("{name}__slope_sh"), s_sh));
        columns.push((format!("{name}__slope_all"), s_all));
        columns.push((format!("{name}__bkp_before"), bkp_before));
        columns.push((format!("{name}__bkp_after"), bkp_after));
    }

    for (name, col) in &self_reports.numeric {
        let values: Vec<Option<f64>> = participants.iter().map(|p| col.get(p).copied()).collect();
        columns.push((name.clone(), values));
    }
    for (name, col) in &self_reports.categorical {
        let cells: Vec<Option<&str>> = participants
            .iter()
            .map(|p| col.get(p).map(String::as_str))
            .collect();
        for indicator in one_hot(&cells) {
            columns.push((format!("{name}={}", indicator.category), indicator.values));
        }
    }

    // canonical order, drop fully-missing columns
    columns.sort_by(|a, b| a.0.cmp(&b.0));
    columns.retain(|(_, values)| values.iter().any(Option::is_some));

    let names: Vec<String> = columns.iter().map(|(n, _)| n.clone()).collect();
    let rows: Vec<Vec<Option<f64>>> = (0..participants.len())
        .map(|p| columns.iter().map(|(_, values)| values[p]).collect())
        .collect();
    WeeklyMatrix {
        participants,
        columns: names,
        rows,
    }
}

/// Column means over observed cells; `None` for all-missing columns.
pub fn column_means(rows: &[Vec<Option<f64>>], n_cols: usize) -> Vec<Option<f64>> {
    let mut sums = vec![0.0; n_cols];
    let mut counts = vec![0usize; n_cols];
    for row in rows {
        for (c, cell) in row.iter().enumerate() {
            if let Some(v) = cell {
                sums[c] += v;
                counts[c] += 1;
            }
        }
    }
    (0..n_cols)
        .map(|c| (counts[c] > 0).then(|| sums[c] / counts[c] as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    #[test]
    fn weekly_columns_carry_aggregates_and_change_features() {
        let days: Vec<NaiveDate> = (0..7)
            .map(|i| NaiveDate::from_ymd_opt(2018, 4, 2 + i).unwrap())
            .collect();
        let mut daily = DailyFeatureMatrix::new(
            vec![ParticipantId::from("p1")],
            days,
            vec!["f_tent".to_string()],
        )
        .unwrap();
        for (d, v) in [1.0, 2.0, 3.0, 4.0, 3.0, 2.0, 1.0].iter().enumerate() {
            daily.set(0, d, 0, *v);
        }
        let table = SelfReportTable::default();
        let w = weekly_matrix(&daily, &table);
        let get = |name: &str| w.rows[0][w.column_pos(name).unwrap()];
        assert_eq!(get("f_tent__wkmean"), Some(16.0 / 7.0));
        assert!((get("f_tent__slope_fh").unwrap() - 1.0).abs() < 1e-9);
        assert!((get("f_tent__slope_sh").unwrap() + 1.0).abs() < 1e-9);
        assert!((get("f_tent__bkp_before").unwrap() - 1.0).abs() < 1e-9);
        assert!((get("f_tent__bkp_after").unwrap() + 1.0).abs() < 1e-9);
        // canonical sorted order
        let mut sorted = w.columns.clone();
        sorted.sort();
        assert_eq!(w.columns, sorted);
    }

    #[test]
    fn categorical_self_reports_one_hot_and_missing_columns_drop() {
        let days: Vec<NaiveDate> = (0..7)
            .map(|i| NaiveDate::from_ymd_opt(2018, 4, 2 + i).unwrap())
            .collect();
        let p1 = ParticipantId::from("p1");
        let p2 = ParticipantId::from("p2");
        let mut daily = DailyFeatureMatrix::new(
            vec![p1.clone(), p2.clone()],
            days,
            vec!["f_const".to_string()],
        )
        .unwrap();
        daily.set(0, 0, 0, 5.0);
        let mut table = SelfReportTable::default();
        table.categorical.push((
            "sr_provider".into(),
            [(p1.clone(), "alpha".to_string()), (p2.clone(), "beta".to_string())].into(),
        ));
        let w = weekly_matrix(&daily, &table);
        assert!(w.column_pos("sr_provider=alpha").is_some());
        assert_eq!(w.rows[0][w.column_pos("sr_provider=alpha").unwrap()], Some(1.0));
        assert_eq!(w.rows[1][w.column_pos("sr_provider=alpha").unwrap()], Some(0.0));
        // p1 observed f_const on one day only: std undefined for everyone,
        // so the wkstd column is fully missing and must be dropped
        assert!(w.column_pos("f_const__wkstd").is_none());
        assert!(w.column_pos("f_const__wkmean").is_some());
    }
}
