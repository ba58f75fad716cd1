//! Common cleaning steps applied before either modeling path: per-participant
//! IQR capping, one-hot encoding of categoricals, all-missing feature removal.

use super::matrix::DailyFeatureMatrix;

/// Linear-interpolation quantile between order statistics (the "type 7"
/// rule). `sorted` must be ascending and non-empty, `p` in [0, 1].
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Cap one participant's daily series of one feature at Q1 - 1.5 IQR and
/// Q3 + 1.5 IQR. Quartiles come from that participant's own non-missing
/// values; series with fewer than 4 observed values pass through unchanged,
/// and missing cells are never touched.
pub fn cap_outliers_iqr(series: &mut [Option<f64>]) {
    let mut observed: Vec<f64> = series.iter().flatten().copied().collect();
    if observed.len() < 4 {
        return;
    }
    observed.sort_by(|a, b| a.partial_cmp(b).expect("finite feature values"));
    let q1 = quantile_type7(&observed, 0.25);
    let q3 = quantile_type7(&observed, 0.75);
    let iqr = q3 - q1;
    let lo = q1 - 1.5 * iqr;
    let hi = q3 + 1.5 * iqr;
    for cell in series.iter_mut() {
        if let Some(v) = cell {
            *v = v.clamp(lo, hi);
        }
    }
}

/// Apply IQR capping to every (participant, feature) series of the matrix,
/// over the whole term.
pub fn cap_matrix_outliers(matrix: &mut DailyFeatureMatrix) {
    for p in 0..matrix.n_participants() {
        for f in 0..matrix.n_features() {
            let mut series = matrix.series(p, f);
            cap_outliers_iqr(&mut series);
            matrix.set_series(p, f, &series);
        }
    }
}

/// An indicator column produced by one-hot encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct OneHotColumn {
    pub category: String,
    /// One cell per input row; missing input cells stay missing.
    pub values: Vec<Option<f64>>,
}

/// Expand a categorical column into one indicator column per observed
/// category (sorted order). Exactly one indicator is 1 per non-missing cell;
/// a missing cell is missing in every indicator.
pub fn one_hot(column: &[Option<&str>]) -> Vec<OneHotColumn> {
    let mut categories: Vec<&str> = column.iter().flatten().copied().collect();
    categories.sort_unstable();
    categories.dedup();
    categories
        .into_iter()
        .map(|cat| OneHotColumn {
            category: cat.to_string(),
            values: column
                .iter()
                .map(|cell| cell.map(|v| if v == cat { 1.0 } else { 0.0 }))
                .collect(),
        })
        .collect()
}

/// Drop features with zero observed cells; order of the survivors preserved.
pub fn drop_all_missing(matrix: &DailyFeatureMatrix) -> DailyFeatureMatrix {
    let keep: Vec<usize> = (0..matrix.n_features())
        .filter(|&f| !matrix.feature_fully_missing(f))
        .collect();
    matrix.select_features(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ParticipantId;
    use chrono::NaiveDate;

    #[test]
    fn iqr_cap_of_spiked_series() {
        // sorted {1,2,3,100}: Q1 = 1.75, Q3 = 27.25, IQR = 25.5,
        // upper cap = 27.25 + 38.25 = 65.5
        let mut s = vec![Some(1.0), Some(2.0), Some(3.0), Some(100.0)];
        cap_outliers_iqr(&mut s);
        assert_eq!(s, vec![Some(1.0), Some(2.0), Some(3.0), Some(65.5)]);
    }

    #[test]
    fn iqr_cap_zero_spread_is_identity() {
        let mut s = vec![Some(5.0); 4];
        cap_outliers_iqr(&mut s);
        assert_eq!(s, vec![Some(5.0); 4]);
    }

    #[test]
    fn iqr_cap_preserves_missing_and_short_series() {
        let mut s = vec![Some(1.0), Some(2.0), None, Some(3.0)];
        cap_outliers_iqr(&mut s);
        assert_eq!(s[2], None);

        let mut short = vec![Some(1.0), Some(1000.0), None];
        cap_outliers_iqr(&mut short);
        assert_eq!(short, vec![Some(1.0), Some(1000.0), None]);
    }

    #[test]
    fn iqr_cap_is_idempotent_on_bodied_series() {
        // one spike per tail around a substantial body: the cap leaves the
        // quartiles alone, so a second pass changes nothing
        let mut once = vec![
            Some(-50.0),
            Some(1.0),
            Some(2.0),
            Some(2.0),
            Some(3.0),
            Some(3.0),
            Some(4.0),
            Some(5.0),
            Some(90.0),
        ];
        cap_outliers_iqr(&mut once);
        let mut twice = once.clone();
        cap_outliers_iqr(&mut twice);
        assert_eq!(once, twice);
    }

    #[test]
    fn one_hot_basic_and_missing() {
        let cols = one_hot(&[Some("A"), Some("B"), Some("A")]);
        assert_eq!(cols.len(), 2);
        assert_eq!(cols[0].category, "A");
        assert_eq!(cols[0].values, vec![Some(1.0), Some(0.0), Some(1.0)]);
        assert_eq!(cols[1].values, vec![Some(0.0), Some(1.0), Some(0.0)]);

        let single = one_hot(&[Some("x"), Some("x")]);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].values, vec![Some(1.0), Some(1.0)]);

        let with_missing = one_hot(&[Some("A"), None]);
        assert_eq!(with_missing.len(), 1);
        assert_eq!(with_missing[0].values, vec![Some(1.0), None]);
    }

    #[test]
    fn one_hot_argmax_recovers_category() {
        let input = [Some("c"), Some("a"), None, Some("b"), Some("a")];
        let cols = one_hot(&input);
        for (row, cell) in input.iter().enumerate() {
            let recovered = cols
                .iter()
                .filter_map(|c| c.values[row].map(|v| (c.category.as_str(), v)))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .map(|(cat, _)| cat);
            assert_eq!(recovered, *cell);
        }
    }

    fn tiny_matrix() -> DailyFeatureMatrix {
        DailyFeatureMatrix::new(
            vec![ParticipantId::from("p1")],
            vec![
                NaiveDate::from_ymd_opt(2018, 4, 2).unwrap(),
                NaiveDate::from_ymd_opt(2018, 4, 3).unwrap(),
            ],
            vec!["kept".to_string(), "empty".to_string()],
        )
        .unwrap()
    }

    #[test]
    fn drop_all_missing_removes_only_fully_masked() {
        let mut m = tiny_matrix();
        m.set(0, 0, 0, 1.0);
        let cleaned = drop_all_missing(&m);
        assert_eq!(cleaned.features(), &["kept".to_string()]);

        // no fully-masked feature: identity
        let mut full = tiny_matrix();
        full.set(0, 0, 0, 1.0);
        full.set(0, 1, 1, 2.0);
        let out = drop_all_missing(&full);
        assert_eq!(out.features().len(), 2);

        // everything masked: zero-feature matrix is valid output
        let empty = tiny_matrix();
        let out = drop_all_missing(&empty);
        assert_eq!(out.n_features(), 0);
    }
}
