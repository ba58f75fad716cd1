//! Consistency/transition breakdown: how well predictions track students
//! whose performance stayed stable versus those who moved across the cutoff
//! between the prior and current term.

use serde::{Deserialize, Serialize};

use crate::domain::Performance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionCategory {
    StayHigh,
    StayLow,
    ChangeToHigh,
    ChangeToLow,
}

impl TransitionCategory {
    pub const ALL: [TransitionCategory; 4] = [
        TransitionCategory::StayHigh,
        TransitionCategory::StayLow,
        TransitionCategory::ChangeToHigh,
        TransitionCategory::ChangeToLow,
    ];

    pub fn of(prior: Performance, current: Performance) -> Self {
        match (prior, current) {
            (Performance::High, Performance::High) => TransitionCategory::StayHigh,
            (Performance::Low, Performance::Low) => TransitionCategory::StayLow,
            (Performance::Low, Performance::High) => TransitionCategory::ChangeToHigh,
            (Performance::High, Performance::Low) => TransitionCategory::ChangeToLow,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TransitionCategory::StayHigh => "stay_high",
            TransitionCategory::StayLow => "stay_low",
            TransitionCategory::ChangeToHigh => "change_to_high",
            TransitionCategory::ChangeToLow => "change_to_low",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryOutcome {
    pub count: usize,
    pub correct: usize,
}

impl CategoryOutcome {
    /// Fraction of the category whose current label was predicted right;
    /// `None` for an empty category.
    pub fn accuracy(&self) -> Option<f64> {
        (self.count > 0).then(|| self.correct as f64 / self.count as f64)
    }
}

/// The four categories partition the participants carrying both labels;
/// participants without a prior label land in `unclassified`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionBreakdown {
    pub stay_high: CategoryOutcome,
    pub stay_low: CategoryOutcome,
    pub change_to_high: CategoryOutcome,
    pub change_to_low: CategoryOutcome,
    pub unclassified: usize,
}

impl TransitionBreakdown {
    pub fn get(&self, c: TransitionCategory) -> CategoryOutcome {
        match c {
            TransitionCategory::StayHigh => self.stay_high,
            TransitionCategory::StayLow => self.stay_low,
            TransitionCategory::ChangeToHigh => self.change_to_high,
            TransitionCategory::ChangeToLow => self.change_to_low,
        }
    }

    pub fn classified_total(&self) -> usize {
        TransitionCategory::ALL.iter().map(|c| self.get(*c).count).sum()
    }
}

/// `prior[i]` of `None` excludes participant `i` from the four categories.
pub fn transition_breakdown(
    prior: &[Option<Performance>],
    current: &[Performance],
    predicted: &[Performance],
) -> TransitionBreakdown {
    assert_eq!(prior.len(), current.len());
    assert_eq!(prior.len(), predicted.len());
    let mut out = TransitionBreakdown::default();
    for i in 0..current.len() {
        let Some(prior_label) = prior[i] else {
            out.unclassified += 1;
            continue;
        };
        let slot = match TransitionCategory::of(prior_label, current[i]) {
            TransitionCategory::StayHigh => &mut out.stay_high,
            TransitionCategory::StayLow => &mut out.stay_low,
            TransitionCategory::ChangeToHigh => &mut out.change_to_high,
            TransitionCategory::ChangeToLow => &mut out.change_to_low,
        };
        slot.count += 1;
        if predicted[i] == current[i] {
            slot.correct += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Performance::{High, Low};

    #[test]
    fn all_stay_high_with_perfect_predictor() {
        let prior = vec![Some(High); 5];
        let current = vec![High; 5];
        let b = transition_breakdown(&prior, &current, &current);
        assert_eq!(b.stay_high.count, 5);
        assert_eq!(b.stay_high.accuracy(), Some(1.0));
        assert_eq!(b.stay_low.count, 0);
        assert_eq!(b.stay_low.accuracy(), None);
        assert_eq!(b.classified_total(), 5);
    }

    #[test]
    fn constant_high_predictor_splits_cleanly() {
        let prior = vec![Some(High), Some(Low), Some(Low), Some(High)];
        let current = vec![High, Low, High, Low];
        let predicted = vec![High; 4];
        let b = transition_breakdown(&prior, &current, &predicted);
        assert_eq!(b.stay_high.accuracy(), Some(1.0));
        assert_eq!(b.change_to_high.accuracy(), Some(1.0));
        assert_eq!(b.stay_low.accuracy(), Some(0.0));
        assert_eq!(b.change_to_low.accuracy(), Some(0.0));
    }

    #[test]
    fn missing_prior_goes_unclassified() {
        let prior = vec![Some(High), None, Some(Low)];
        let current = vec![High, High, Low];
        let predicted = vec![High, Low, Low];
        let b = transition_breakdown(&prior, &current, &predicted);
        assert_eq!(b.unclassified, 1);
        assert_eq!(b.classified_total(), 2);
    }
}
