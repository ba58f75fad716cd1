//! Dense participant x day x feature value cube with a missingness mask.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{DomainError, ParticipantId};

/// 3-D feature array `[participants x days x features]` plus a same-shape
/// boolean mask (`true` = observed). Masked cells carry no semantic value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DailyFeatureMatrix {
    participants: Vec<ParticipantId>,
    days: Vec<NaiveDate>,
    features: Vec<String>,
    values: Vec<f64>,
    mask: Vec<bool>,
    #[serde(skip)]
    participant_index: BTreeMap<ParticipantId, usize>,
    #[serde(skip)]
    feature_index: BTreeMap<String, usize>,
}

impl DailyFeatureMatrix {
    /// All cells start masked-missing.
    pub fn new(
        participants: Vec<ParticipantId>,
        days: Vec<NaiveDate>,
        features: Vec<String>,
    ) -> Result<Self, DomainError> {
        let mut feature_index = BTreeMap::new();
        for (i, f) in features.iter().enumerate() {
            if feature_index.insert(f.clone(), i).is_some() {
                return Err(DomainError::ShapeMismatch(format!("duplicate feature `{f}`")));
            }
        }
        let mut participant_index = BTreeMap::new();
        for (i, p) in participants.iter().enumerate() {
            if participant_index.insert(p.clone(), i).is_some() {
                return Err(DomainError::ShapeMismatch(format!("duplicate participant `{p}`")));
            }
        }
        let n = participants.len() * days.len() * features.len();
        Ok(Self {
            participants,
            days,
            features,
            values: vec![0.0; n],
            mask: vec![false; n],
            participant_index,
            feature_index,
        })
    }

    pub fn participants(&self) -> &[ParticipantId] {
        &self.participants
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn n_participants(&self) -> usize {
        self.participants.len()
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn participant_pos(&self, p: &ParticipantId) -> Option<usize> {
        self.participant_index.get(p).copied()
    }

    pub fn feature_pos(&self, name: &str) -> Option<usize> {
        self.feature_index.get(name).copied()
    }

    pub fn day_pos(&self, day: NaiveDate) -> Option<usize> {
        self.days.iter().position(|d| *d == day)
    }

    #[inline]
    fn offset(&self, p: usize, d: usize, f: usize) -> usize {
        debug_assert!(p < self.participants.len() && d < self.days.len() && f < self.features.len());
        (p * self.days.len() + d) * self.features.len() + f
    }

    /// Observed value or `None` when masked.
    #[inline]
    pub fn get(&self, p: usize, d: usize, f: usize) -> Option<f64> {
        let i = self.offset(p, d, f);
        self.mask[i].then(|| self.values[i])
    }

    #[inline]
    pub fn set(&mut self, p: usize, d: usize, f: usize, value: f64) {
        let i = self.offset(p, d, f);
        // +0.0 folds IEEE negative zero (e.g. an empty f64 sum) into plain
        // zero so persisted matrices never print "-0"
        self.values[i] = value + 0.0;
        self.mask[i] = true;
    }

    #[inline]
    pub fn clear(&mut self, p: usize, d: usize, f: usize) {
        let i = self.offset(p, d, f);
        self.values[i] = 0.0;
        self.mask[i] = false;
    }

    /// Daily series of one feature for one participant; `None` where masked.
    pub fn series(&self, p: usize, f: usize) -> Vec<Option<f64>> {
        (0..self.days.len()).map(|d| self.get(p, d, f)).collect()
    }

    pub fn set_series(&mut self, p: usize, f: usize, series: &[Option<f64>]) {
        assert_eq!(series.len(), self.days.len());
        for (d, v) in series.iter().enumerate() {
            match v {
                Some(x) => self.set(p, d, f, *x),
                None => self.clear(p, d, f),
            }
        }
    }

    pub fn feature_fully_missing(&self, f: usize) -> bool {
        for p in 0..self.participants.len() {
            for d in 0..self.days.len() {
                if self.mask[self.offset(p, d, f)] {
                    return false;
                }
            }
        }
        true
    }

    /// New matrix keeping only the named features, order preserved.
    pub fn select_features(&self, keep: &[usize]) -> DailyFeatureMatrix {
        let features = keep.iter().map(|&f| self.features[f].clone()).collect();
        let mut out = DailyFeatureMatrix::new(self.participants.clone(), self.days.clone(), features)
            .expect("selection preserves uniqueness");
        for p in 0..self.participants.len() {
            for d in 0..self.days.len() {
                for (new_f, &old_f) in keep.iter().enumerate() {
                    if let Some(v) = self.get(p, d, old_f) {
                        out.set(p, d, new_f, v);
                    }
                }
            }
        }
        out
    }

    /// Rebuild the lookup indices after deserialization.
    pub fn reindex(&mut self) {
        self.participant_index = self
            .participants
            .iter()
            .enumerate()
            .map(|(i, p)| (p.clone(), i))
            .collect();
        self.feature_index = self
            .features
            .iter()
            .enumerate()
            .map(|(i, f)| (f.clone(), i))
            .collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_clear_roundtrip() {
        let mut m = DailyFeatureMatrix::new(
            vec!["a".into(), "b".into()],
            vec![NaiveDate::from_ymd_opt(2018, 4, 2).unwrap()],
            vec!["f1".to_string(), "f2".to_string()],
        )
        .unwrap();
        assert_eq!(m.get(0, 0, 0), None);
        m.set(0, 0, 1, 2.5);
        assert_eq!(m.get(0, 0, 1), Some(2.5));
        m.clear(0, 0, 1);
        assert_eq!(m.get(0, 0, 1), None);
        assert!(m.feature_fully_missing(1));
    }

    #[test]
    fn duplicate_feature_rejected() {
        let r = DailyFeatureMatrix::new(
            vec!["a".into()],
            vec![],
            vec!["f".to_string(), "f".to_string()],
        );
        assert!(r.is_err());
    }
}
