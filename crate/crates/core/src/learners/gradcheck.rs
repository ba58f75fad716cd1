//! Central-finite-difference verification of hand-derived gradients.

/// Numeric gradient of `f` at `params` by central differences with the
/// given step. `f` may read the slice but must not keep state across calls.
pub fn finite_difference_gradient(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &mut [f64],
    step: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + step;
        let plus = f(params);
        params[i] = orig - step;
        let minus = f(params);
        params[i] = orig;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Max over parameters of `|a - n| / max(1, |a|, |n|)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / 1.0_f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max)
}

/// Compare an analytic gradient against central differences; returns the
/// max relative error.
pub fn gradient_check(
    f: impl FnMut(&[f64]) -> f64,
    params: &mut [f64],
    analytic: &[f64],
    step: f64,
) -> f64 {
    let numeric = finite_difference_gradient(f, params, step);
    max_relative_error(analytic, &numeric)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_loss_of_linear_model_is_near_exact() {
        // f(w) = mean (w.x - y)^2 over a tiny fixed set
        let xs = [[1.0, 2.0], [0.5, -1.0], [-2.0, 0.3]];
        let ys = [1.0, -0.5, 2.0];
        let mut w = vec![0.3, -0.7];
        let f = |p: &[f64]| -> f64 {
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| {
                    let r = p[0] * x[0] + p[1] * x[1] - y;
                    r * r
                })
                .sum::<f64>()
                / xs.len() as f64
        };
        let analytic: Vec<f64> = {
            let mut g = vec![0.0; 2];
            for (x, y) in xs.iter().zip(&ys) {
                let r = w[0] * x[0] + w[1] * x[1] - y;
                g[0] += 2.0 * r * x[0] / xs.len() as f64;
                g[1] += 2.0 * r * x[1] / xs.len() as f64;
            }
            g
        };
        let err = gradient_check(f, &mut w, &analytic, 1e-4);
        assert!(err < 1e-8, "central differences are exact on quadratics: {err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut w = vec![1.0];
        let analytic = vec![3.0]; // true derivative of w^2 at 1 is 2
        let err = gradient_check(|p| p[0] * p[0], &mut w, &analytic, 1e-4);
        assert!(err > 0.3);
    }
}
