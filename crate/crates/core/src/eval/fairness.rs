//! Group fairness measures for one protected trait: demographic parity,
//! equalized odds, and equal opportunity, each in difference and ratio form.
//!
//! Conventions, fixed once for the whole toolkit:
//! - A positive prediction (`y_hat = 1`) is a predicted High performer.
//! - Ratios divide the unprotected group's rate by the protected group's.
//! - The equalized-odds ratio is the smaller of the TPR ratio and the FNR
//!   ratio (an alternative TPR/FPR mode is available behind a flag).
//! - When both rates of a ratio are zero the groups behave identically and
//!   the ratio is reported as 1; a zero protected rate against a nonzero
//!   unprotected one is reported as infinite.

use serde::{Deserialize, Serialize};

use crate::domain::Performance;

/// Both disparity forms of one metric for one trait.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairnessValue {
    /// Absolute disparity.
    pub difference: f64,
    /// Protected-minus-unprotected gap behind the absolute difference.
    pub signed_difference: f64,
    /// Unprotected rate over protected rate; may be infinite.
    pub ratio: f64,
}

impl FairnessValue {
    /// The reasonable-range gate: difference within [-0.1, 0.1] and ratio
    /// within [0.8, 1.2].
    pub fn reasonable(&self) -> bool {
        reasonable(self.difference, self.ratio)
    }
}

pub fn reasonable(difference: f64, ratio: f64) -> bool {
    (-0.1..=0.1).contains(&difference) && (0.8..=1.2).contains(&ratio)
}

/// Why a fairness value could not be computed for a trait.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FairnessUndefined {
    EmptyProtectedGroup,
    EmptyUnprotectedGroup,
    NoActualPositivesInProtected,
    NoActualPositivesInUnprotected,
    NoActualNegativesInProtected,
    NoActualNegativesInUnprotected,
}

impl FairnessUndefined {
    pub fn as_str(&self) -> &'static str {
        match self {
            FairnessUndefined::EmptyProtectedGroup => "empty_protected_group",
            FairnessUndefined::EmptyUnprotectedGroup => "empty_unprotected_group",
            FairnessUndefined::NoActualPositivesInProtected => "no_actual_positives_in_protected",
            FairnessUndefined::NoActualPositivesInUnprotected => "no_actual_positives_in_unprotected",
            FairnessUndefined::NoActualNegativesInProtected => "no_actual_negatives_in_protected",
            FairnessUndefined::NoActualNegativesInUnprotected => "no_actual_negatives_in_unprotected",
        }
    }
}

pub type FairnessResult = Result<FairnessValue, FairnessUndefined>;

fn ratio_of(unprotected: f64, protected_: f64) -> f64 {
    if protected_ == 0.0 {
        if unprotected == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        unprotected / protected_
    }
}

struct GroupRates {
    positives: usize,
    total: usize,
    true_pos: usize,
    actual_pos: usize,
    false_pos: usize,
    actual_neg: usize,
}

impl GroupRates {
    fn selection_rate(&self) -> f64 {
        self.positives as f64 / self.total as f64
    }
    fn tpr(&self) -> f64 {
        self.true_pos as f64 / self.actual_pos as f64
    }
    fn fpr(&self) -> f64 {
        self.false_pos as f64 / self.actual_neg as f64
    }
    fn fnr(&self) -> f64 {
        1.0 - self.tpr()
    }
}

fn tally(y_true: &[Performance], y_pred: &[Performance], group: &[bool], protected_: bool) -> GroupRates {
    let mut r = GroupRates {
        positives: 0,
        total: 0,
        true_pos: 0,
        actual_pos: 0,
        false_pos: 0,
        actual_neg: 0,
    };
    for i in 0..y_pred.len() {
        if group[i] != protected_ {
            continue;
        }
        r.total += 1;
        let pred_pos = y_pred[i] == Performance::High;
        if pred_pos {
            r.positives += 1;
        }
        match y_true.get(i) {
            Some(Performance::High) => {
                r.actual_pos += 1;
                if pred_pos {
                    r.true_pos += 1;
                }
            }
            Some(Performance::Low) => {
                r.actual_neg += 1;
                if pred_pos {
                    r.false_pos += 1;
                }
            }
            None => {}
        }
    }
    r
}

fn check_nonempty(y_pred: &[Performance], group: &[bool]) -> Result<(), FairnessUndefined> {
    assert_eq!(y_pred.len(), group.len());
    if !group.iter().any(|g| *g) {
        return Err(FairnessUndefined::EmptyProtectedGroup);
    }
    if !group.iter().any(|g| !*g) {
        return Err(FairnessUndefined::EmptyUnprotectedGroup);
    }
    Ok(())
}

/// Equal positive-prediction rates across groups.
pub fn demographic_parity(y_pred: &[Performance], group: &[bool]) -> FairnessResult {
    check_nonempty(y_pred, group)?;
    let p = tally(&[], y_pred, group, true);
    let u = tally(&[], y_pred, group, false);
    let (rp, ru) = (p.selection_rate(), u.selection_rate());
    Ok(FairnessValue {
        difference: (rp - ru).abs(),
        signed_difference: rp - ru,
        ratio: ratio_of(ru, rp),
    })
}

/// Which pair of rate ratios enters the equalized-odds ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqOddsRatioMode {
    /// min(TPR ratio, FNR ratio) — the form used throughout this toolkit.
    #[default]
    TprFnr,
    /// min(TPR ratio, FPR ratio) — common toolkit convention, behind a flag.
    TprFpr,
}

/// Equal true-positive and false-positive rates across groups.
pub fn equalized_odds(y_true: &[Performance], y_pred: &[Performance], group: &[bool]) -> FairnessResult {
    equalized_odds_with_mode(y_true, y_pred, group, EqOddsRatioMode::TprFnr)
}

pub fn equalized_odds_with_mode(
    y_true: &[Performance],
    y_pred: &[Performance],
    group: &[bool],
    mode: EqOddsRatioMode,
) -> FairnessResult {
    assert_eq!(y_true.len(), y_pred.len());
    check_nonempty(y_pred, group)?;
    let p = tally(y_true, y_pred, group, true);
    let u = tally(y_true, y_pred, group, false);
    if p.actual_pos == 0 {
        return Err(FairnessUndefined::NoActualPositivesInProtected);
    }
    if u.actual_pos == 0 {
        return Err(FairnessUndefined::NoActualPositivesInUnprotected);
    }
    if p.actual_neg == 0 {
        return Err(FairnessUndefined::NoActualNegativesInProtected);
    }
    if u.actual_neg == 0 {
        return Err(FairnessUndefined::NoActualNegativesInUnprotected);
    }
    let tpr_gap = p.tpr() - u.tpr();
    let fpr_gap = p.fpr() - u.fpr();
    let signed = if tpr_gap.abs() >= fpr_gap.abs() {
        tpr_gap
    } else {
        fpr_gap
    };
    let ratio = match mode {
        EqOddsRatioMode::TprFnr => ratio_of(u.tpr(), p.tpr()).min(ratio_of(u.fnr(), p.fnr())),
        EqOddsRatioMode::TprFpr => ratio_of(u.tpr(), p.tpr()).min(ratio_of(u.fpr(), p.fpr())),
    };
    Ok(FairnessValue {
        difference: tpr_gap.abs().max(fpr_gap.abs()),
        signed_difference: signed,
        ratio,
    })
}

/// Equal true-positive rates across groups.
pub fn equal_opportunity(y_true: &[Performance], y_pred: &[Performance], group: &[bool]) -> FairnessResult {
    assert_eq!(y_true.len(), y_pred.len());
    check_nonempty(y_pred, group)?;
    let p = tally(y_true, y_pred, group, true);
    let u = tally(y_true, y_pred, group, false);
    if p.actual_pos == 0 {
        return Err(FairnessUndefined::NoActualPositivesInProtected);
    }
    if u.actual_pos == 0 {
        return Err(FairnessUndefined::NoActualPositivesInUnprotected);
    }
    let gap = p.tpr() - u.tpr();
    Ok(FairnessValue {
        difference: gap.abs(),
        signed_difference: gap,
        ratio: ratio_of(u.tpr(), p.tpr()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Performance::{High, Low};

    fn perf(bits: &[u8]) -> Vec<Performance> {
        bits.iter().map(|b| if *b == 1 { High } else { Low }).collect()
    }

    #[test]
    fn identical_rates_are_perfectly_fair() {
        let y_pred = perf(&[1, 0, 1, 0]);
        let group = vec![true, true, false, false];
        let v = demographic_parity(&y_pred, &group).unwrap();
        assert_eq!(v.difference, 0.0);
        assert_eq!(v.ratio, 1.0);
        assert!(v.reasonable());
    }

    #[test]
    fn demographic_parity_hand_case() {
        // protected 6/10 positive, unprotected 3/10
        let mut y_pred = perf(&[1, 1, 1, 1, 1, 1, 0, 0, 0, 0]);
        y_pred.extend(perf(&[1, 1, 1, 0, 0, 0, 0, 0, 0, 0]));
        let mut group = vec![true; 10];
        group.extend(vec![false; 10]);
        let v = demographic_parity(&y_pred, &group).unwrap();
        assert!((v.difference - 0.3).abs() < 1e-12);
        assert!((v.ratio - 0.5).abs() < 1e-12);
        assert!(!v.reasonable());
    }

    #[test]
    fn reasonable_gate_matches_published_rows() {
        // bolded row: (0.095, 0.882); unreasonable via difference: (0.147, 0.808)
        assert!(reasonable(0.095, 0.882));
        assert!(!reasonable(0.147, 0.808));
        // boundary values are inside
        assert!(reasonable(0.1, 0.8));
        assert!(reasonable(-0.1, 1.2));
        assert!(!reasonable(0.1000001, 1.0));
        assert!(!reasonable(0.0, f64::INFINITY));
    }

    #[test]
    fn equalized_odds_takes_worst_gap() {
        // protected: TPR 0.8 (4/5), FPR 0.2 (1/5); unprotected: TPR 0.6 (3/5), FPR 0.3 — use 10 to get .3
        let y_true = perf(&[1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0]);
        let y_pred = perf(&[1, 1, 1, 1, 0, 1, 0, 0, 0, 0, 1, 1, 1, 0, 0, 1, 1, 0, 0, 0]);
        // unprotected FPR = 2/5 = 0.4 with that layout; adjust: want 0.3 -> use denominator 10
        let mut y_true = y_true;
        let mut y_pred = y_pred;
        y_true.extend(perf(&[0, 0, 0, 0, 0]));
        y_pred.extend(perf(&[0, 0, 0, 0, 1]));
        let mut group = vec![true; 10];
        group.extend(vec![false; 15]);
        // unprotected: TPR 3/5=0.6, FPR 3/10=0.3
        let v = equalized_odds(&y_true, &y_pred, &group).unwrap();
        assert!((v.difference - 0.2).abs() < 1e-12);
        // TPR ratio 0.6/0.8=0.75, FNR ratio 0.4/0.2=2.0 -> min 0.75
        assert!((v.ratio - 0.75).abs() < 1e-12);
    }

    #[test]
    fn equal_opportunity_hand_case() {
        // protected TPR 0.9 (9/10), unprotected 0.6 (6/10)
        let mut y_true = vec![High; 10];
        y_true.extend(vec![High; 10]);
        let mut y_pred = perf(&[1, 1, 1, 1, 1, 1, 1, 1, 1, 0]);
        y_pred.extend(perf(&[1, 1, 1, 1, 1, 1, 0, 0, 0, 0]));
        let mut group = vec![true; 10];
        group.extend(vec![false; 10]);
        let v = equal_opportunity(&y_true, &y_pred, &group).unwrap();
        assert!((v.difference - 0.3).abs() < 1e-12);
        assert!((v.ratio - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn undefined_records_carry_reasons() {
        let y_pred = perf(&[1, 0]);
        assert_eq!(
            demographic_parity(&y_pred, &[true, true]).unwrap_err(),
            FairnessUndefined::EmptyUnprotectedGroup
        );
        let y_true = perf(&[0, 0, 1, 0]);
        let y_pred = perf(&[1, 0, 1, 0]);
        let group = [true, true, false, false];
        assert_eq!(
            equal_opportunity(&y_true, &y_pred, &group).unwrap_err(),
            FairnessUndefined::NoActualPositivesInProtected
        );
        assert_eq!(
            equalized_odds(&y_true, &y_pred, &group).unwrap_err(),
            FairnessUndefined::NoActualPositivesInProtected
        );
    }

    #[test]
    fn zero_protected_rate_reports_infinite_ratio() {
        let y_pred = perf(&[0, 0, 1, 0]);
        let group = [true, true, false, false];
        let v = demographic_parity(&y_pred, &group).unwrap();
        assert!(v.ratio.is_infinite());
        assert!(!v.reasonable());
    }

    #[test]
    fn swapping_groups_inverts_dp_and_eopp_ratios() {
        let y_true = perf(&[1, 1, 0, 1, 0, 1, 1, 0, 1, 1]);
        let y_pred = perf(&[1, 0, 0, 1, 1, 1, 1, 0, 0, 1]);
        let group = [true, true, true, true, true, false, false, false, false, false];
        let swapped: Vec<bool> = group.iter().map(|g| !g).collect();

        let dp = demographic_parity(&y_pred, &group).unwrap();
        let dp_sw = demographic_parity(&y_pred, &swapped).unwrap();
        assert!((dp.difference - dp_sw.difference).abs() < 1e-12);
        assert!((dp.ratio * dp_sw.ratio - 1.0).abs() < 1e-12);

        let eo = equal_opportunity(&y_true, &y_pred, &group).unwrap();
        let eo_sw = equal_opportunity(&y_true, &y_pred, &swapped).unwrap();
        assert!((eo.difference - eo_sw.difference).abs() < 1e-12);
        assert!((eo.ratio * eo_sw.ratio - 1.0).abs() < 1e-12);

        let eq = equalized_odds(&y_true, &y_pred, &group).unwrap();
        let eq_sw = equalized_odds(&y_true, &y_pred, &swapped).unwrap();
        assert!((eq.difference - eq_sw.difference).abs() < 1e-12);
    }
}
