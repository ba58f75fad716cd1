//! Linear models trained from scratch: L2-regularized logistic regression
//! by full-batch gradient descent, the majority-class rule, and the 1-D
//! hinge-loss SVM used for the prior-GPA baseline.

use serde::{Deserialize, Serialize};

use crate::domain::Performance;

use super::LearnerError;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LrConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            max_iter: 500,
            grad_tol: 1e-6,
        }
    }
}

/// Logistic regression over standardized features. The positive class
/// (y = 1) is the Low performer, so `predict_proba` is the probability of
/// being at risk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: LrConfig,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean cross-entropy plus the L2 term (bias unregularized).
pub fn logistic_loss(x: &[Vec<f64>], y: &[u8], weights: &[f64], bias: f64, l2: f64) -> f64 {
    let n = x.len() as f64;
    let mut loss = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z: f64 = row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() + bias;
        // -[y ln p + (1-y) ln(1-p)] in a numerically safe form
        let val = if z >= 0.0 {
            (1.0 + (-z).exp()).ln() + if label == 1 { 0.0 } else { z }
        } else {
            (1.0 + z.exp()).ln() - if label == 1 { z } else { 0.0 }
        };
        loss += val;
    }
    loss / n + 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>()
}

fn logistic_grad(x: &[Vec<f64>], y: &[u8], weights: &[f64], bias: f64, l2: f64) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z: f64 = row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() + bias;
        let resid = sigmoid(z) - label as f64;
        for (g, v) in gw.iter_mut().zip(row) {
            *g += resid * v;
        }
        gb += resid;
    }
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    (gw, gb / n)
}

/// Analytic gradient of [`logistic_loss`]: (d/dw, d/db).
pub fn logistic_gradient(x: &[Vec<f64>], y: &[u8], weights: &[f64], bias: f64, l2: f64) -> (Vec<f64>, f64) {
    logistic_grad(x, y, weights, bias, l2)
}

/// Primal hinge objective of a linear SVM: 0.5 l2 w'w + C mean(max(0, 1 - s(wx+b)))
/// with s in {-1, +1}.
pub fn hinge_objective(x: &[Vec<f64>], signs: &[f64], weights: &[f64], bias: f64, l2: f64, c: f64) -> f64 {
    let n = x.len() as f64;
    let mut loss = 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    for (row, s) in x.iter().zip(signs) {
        let margin = s * (row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() + bias);
        loss += c * (1.0 - margin).max(0.0) / n;
    }
    loss
}

/// Subgradient of [`hinge_objective`]; exact wherever no sample sits on the
/// hinge kink (margin exactly 1).
pub fn hinge_gradient(
    x: &[Vec<f64>],
    signs: &[f64],
    weights: &[f64],
    bias: f64,
    l2: f64,
    c: f64,
) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut gw: Vec<f64> = weights.iter().map(|w| l2 * w).collect();
    let mut gb = 0.0;
    for (row, s) in x.iter().zip(signs) {
        let margin = s * (row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() + bias);
        if margin < 1.0 {
            for (g, v) in gw.iter_mut().zip(row) {
                *g -= c * s * v / n;
            }
            gb -= c * s / n;
        }
    }
    (gw, gb)
}

/// Distance of the closest sample to the hinge kink; gradient checks reject
/// instances where this is small.
pub fn hinge_kink_margin(x: &[Vec<f64>], signs: &[f64], weights: &[f64], bias: f64) -> f64 {
    x.iter()
        .zip(signs)
        .map(|(row, s)| {
            let margin = s * (row.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() + bias);
            (margin - 1.0).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Largest eigenvalue of X'X/n by power iteration (deterministic start).
fn gram_spectral_bound(x: &[Vec<f64>], dim: usize) -> f64 {
    if dim == 0 || x.is_empty() {
        return 1.0;
    }
    let n = x.len() as f64;
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut lambda = 1.0;
    for _ in 0..50 {
        // u = X'(Xv)/n
        let mut u = vec![0.0; dim];
        for row in x {
            let dot: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (ui, xi) in u.iter_mut().zip(row) {
                *ui += dot * xi;
            }
        }
        for ui in u.iter_mut() {
            *ui /= n;
        }
        let norm = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return 1.0;
        }
        lambda = norm;
        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi = ui / norm;
        }
    }
    lambda
}

/// Fit by full-batch gradient descent with a fixed step of 1/L, where L
/// bounds the loss curvature, until the gradient norm drops under the
/// tolerance or the iteration budget runs out. Deterministic.
pub fn lr_fit(x: &[Vec<f64>], y: &[u8], config: LrConfig) -> Result<LogisticModel, LearnerError> {
    if x.len() != y.len() || x.is_empty() {
        return Err(LearnerError::Shape("rows and labels must align and be nonempty".into()));
    }
    let dim = x[0].len();
    if x.iter().any(|r| r.len() != dim) {
        return Err(LearnerError::Shape("ragged feature rows".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LearnerError::NonFinite("training features".into()));
    }
    let n_pos = y.iter().filter(|l| **l == 1).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(LearnerError::SingleClass);
    }

    let step = 1.0 / (0.25 * gram_spectral_bound(x, dim) + config.l2);
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    for _ in 0..config.max_iter {
        let (gw, gb) = logistic_grad(x, y, &weights, bias, config.l2);
        let gnorm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if gnorm < config.grad_tol {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= step * g;
        }
        bias -= step * gb;
    }
    Ok(LogisticModel {
        weights,
        bias,
        config,
    })
}

impl LogisticModel {
    /// P(Low) per row.
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<Vec<f64>, LearnerError> {
        x.iter()
            .map(|row| {
                if row.len() != self.weights.len() {
                    return Err(LearnerError::Shape(format!(
                        "expected {} features, got {}",
                        self.weights.len(),
                        row.len()
                    )));
                }
                let z: f64 = row.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias;
                Ok(sigmoid(z))
            })
            .collect()
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<Performance>, LearnerError> {
        Ok(self
            .predict_proba(x)?
            .into_iter()
            .map(|p| if p > 0.5 { Performance::Low } else { Performance::High })
            .collect())
    }
}

/// Majority-class baseline. Ties predict High.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ZeroRule {
    pub majority: Performance,
    pub train_low_fraction: f64,
}

impl ZeroRule {
    pub fn fit(y: &[Performance]) -> Self {
        let low = y.iter().filter(|l| **l == Performance::Low).count();
        let high = y.len() - low;
        ZeroRule {
            majority: if low > high { Performance::Low } else { Performance::High },
            train_low_fraction: if y.is_empty() { 0.0 } else { low as f64 / y.len() as f64 },
        }
    }

    pub fn predict(&self, n: usize) -> Vec<Performance> {
        vec![self.majority; n]
    }

    /// Constant score; carries no ranking information, so AUC is 0.5.
    pub fn predict_proba(&self, n: usize) -> Vec<f64> {
        vec![self.train_low_fraction; n]
    }
}

/// 1-D linear SVM over prior-term GPA: hinge loss with L2, trained by
/// deterministic subgradient descent. Positive decision values predict
/// High.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OneRuleSvm {
    pub weight: f64,
    pub bias: f64,
}

pub fn one_rule_svm_fit(prior_gpa: &[f64], y: &[Performance]) -> Result<OneRuleSvm, LearnerError> {
    if prior_gpa.len() != y.len() || prior_gpa.is_empty() {
        return Err(LearnerError::Shape("prior GPA and labels must align".into()));
    }
    if prior_gpa.iter().any(|g| !g.is_finite()) {
        return Err(LearnerError::NonFinite("prior GPA".into()));
    }
    let signs: Vec<f64> = y
        .iter()
        .map(|l| if *l == Performance::High { 1.0 } else { -1.0 })
        .collect();
    if signs.iter().all(|s| *s > 0.0) || signs.iter().all(|s| *s < 0.0) {
        return Err(LearnerError::SingleClass);
    }
    let (l2, c) = (1e-3, 1.0);
    let n = prior_gpa.len() as f64;
    let (mut w, mut b) = (0.0f64, 0.0f64);
    for t in 0..20_000u32 {
        let step = 2.0 / (1.0 + t as f64).sqrt();
        let mut gw = l2 * w;
        let mut gb = 0.0;
        for (x, s) in prior_gpa.iter().zip(&signs) {
            if s * (w * x + b) < 1.0 {
                gw -= c * s * x / n;
                gb -= c * s / n;
            }
        }
        w -= step * gw;
        b -= step * gb;
    }
    Ok(OneRuleSvm { weight: w, bias: b })
}

impl OneRuleSvm {
    pub fn decision(&self, gpa: f64) -> f64 {
        self.weight * gpa + self.bias
    }

    pub fn predict(&self, prior_gpa: &[f64]) -> Vec<Performance> {
        prior_gpa
            .iter()
            .map(|g| {
                if self.decision(*g) > 0.0 {
                    Performance::High
                } else {
                    Performance::Low
                }
            })
            .collect()
    }

    /// Probability-like score of Low from the margin.
    pub fn predict_proba(&self, prior_gpa: &[f64]) -> Vec<f64> {
        prior_gpa.iter().map(|g| sigmoid(-self.decision(*g))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Performance::{High, Low};

    #[test]
    fn sigmoid_hand_value() {
        let model = LogisticModel {
            weights: vec![1.0],
            bias: 0.0,
            config: LrConfig::default(),
        };
        let p = model.predict_proba(&[vec![0.5]]).unwrap();
        assert!((p[0] - 0.6224593312018546).abs() < 1e-12);
        // zero weights, zero bias: always one half
        let zero = LogisticModel {
            weights: vec![0.0, 0.0],
            bias: 0.0,
            config: LrConfig::default(),
        };
        assert_eq!(zero.predict_proba(&[vec![3.0, -7.0]]).unwrap()[0], 0.5);
    }

    #[test]
    fn proba_is_monotone_in_logit() {
        let model = LogisticModel {
            weights: vec![2.0],
            bias: -1.0,
            config: LrConfig::default(),
        };
        let xs: Vec<Vec<f64>> = (-10..=10).map(|i| vec![i as f64 / 2.0]).collect();
        let ps = model.predict_proba(&xs).unwrap();
        assert!(ps.windows(2).all(|w| w[0] < w[1]));
        assert!(ps.iter().all(|p| (0.0..1.0).contains(p) || *p > 0.0));
    }

    #[test]
    fn separable_data_gets_correct_sign() {
        // y=1 (Low) for x > 0
        let x: Vec<Vec<f64>> = (-20..20).map(|i| vec![i as f64 / 10.0]).collect();
        let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] > 0.0)).collect();
        let model = lr_fit(&x, &y, LrConfig::default()).unwrap();
        assert!(model.weights[0] > 0.0);
    }

    #[test]
    fn single_class_and_nonfinite_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        assert!(matches!(lr_fit(&x, &[1, 1], LrConfig::default()), Err(LearnerError::SingleClass)));
        let bad = vec![vec![f64::NAN], vec![2.0]];
        assert!(matches!(
            lr_fit(&bad, &[0, 1], LrConfig::default()),
            Err(LearnerError::NonFinite(_))
        ));
    }

    #[test]
    fn final_loss_never_exceeds_initial() {
        let x: Vec<Vec<f64>> = (0..40)
            .map(|i| vec![(i % 7) as f64 - 3.0, (i % 5) as f64 - 2.0])
            .collect();
        let y: Vec<u8> = (0..40).map(|i| u8::from((i % 7) >= 3)).collect();
        let cfg = LrConfig::default();
        let model = lr_fit(&x, &y, cfg).unwrap();
        let init = logistic_loss(&x, &y, &vec![0.0; 2], 0.0, cfg.l2);
        let fin = logistic_loss(&x, &y, &model.weights, model.bias, cfg.l2);
        assert!(fin <= init);
    }

    #[test]
    fn zero_rule_majority_and_tie() {
        let z = ZeroRule::fit(&[High, High, High, Low]);
        assert_eq!(z.majority, High);
        assert_eq!(z.predict(2), vec![High, High]);
        let tie = ZeroRule::fit(&[High, Low]);
        assert_eq!(tie.majority, High);
    }

    #[test]
    fn svm_boundary_sits_between_separated_groups() {
        let gpa = [3.0, 2.9, 3.05, 2.95, 3.5, 3.55, 3.6, 3.45];
        let y = [Low, Low, Low, Low, High, High, High, High];
        let svm = one_rule_svm_fit(&gpa, &y).unwrap();
        assert_eq!(svm.predict(&gpa), y);
        assert!(svm.decision(3.05) < 0.0);
        assert!(svm.decision(3.45) > 0.0);
        // training accuracy 1.0 on the separable ends
        assert!(svm.decision(2.0) < 0.0);
        assert!(svm.decision(4.0) > 0.0);
    }
}
