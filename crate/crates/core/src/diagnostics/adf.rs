//! Augmented Dickey-Fuller test with constant and linear trend.

use nalgebra::{DMatrix, DVector};

use super::TestReport;
use crate::error::{Error, Result};

const SAMPLE_SIZES: [f64; 6] = [25.0, 50.0, 100.0, 250.0, 500.0, 100_000.0];
const PROBS: [f64; 8] = [0.01, 0.025, 0.05, 0.10, 0.90, 0.95, 0.975, 0.99];
// Fuller's trend-case quantiles of τ, one row per probability.
const QUANTILES: [[f64; 6]; 8] = [
    [-4.38, -4.15, -4.04, -3.99, -3.98, -3.96],
    [-3.95, -3.80, -3.73, -3.69, -3.68, -3.66],
    [-3.60, -3.50, -3.45, -3.43, -3.42, -3.41],
    [-3.24, -3.18, -3.15, -3.13, -3.13, -3.12],
    [-1.14, -1.19, -1.22, -1.23, -1.24, -1.25],
    [-0.80, -0.87, -0.90, -0.92, -0.93, -0.94],
    [-0.50, -0.58, -0.62, -0.64, -0.65, -0.66],
    [-0.15, -0.24, -0.28, -0.31, -0.32, -0.33],
];

/// Piecewise-linear interpolation with constant extrapolation; `xs` ascending.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let k = xs.windows(2).position(|w| x <= w[1]).unwrap();
    let t = (x - xs[k]) / (xs[k + 1] - xs[k]);
    ys[k] + t * (ys[k + 1] - ys[k])
}

/// p-value of τ for `n_diff` differenced observations, clamped to [0.01, 0.99].
pub fn adf_p_value(tau: f64, n_diff: usize) -> f64 {
    let crit: Vec<f64> = QUANTILES.iter().map(|row| interp(&SAMPLE_SIZES, row, n_diff as f64)).collect();
    interp(&crit, &PROBS, tau)
}

pub fn default_lags(n: usize) -> usize {
    ((n as f64 - 1.0).cbrt()).trunc() as usize
}

/// Regresses Δy_t on (1, t, y_{t−1}, Δy_{t−1..t−lags}); τ is the t-ratio of y_{t−1}.
pub fn adf_test(sample: &[f64], lags: Option<usize>) -> Result<TestReport> {
    let n = sample.len();
    if n < 15 {
        return Err(Error::InsufficientData { required: 15, available: n });
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("sample contains non-finite values".into()));
    }
    let lags = lags.unwrap_or_else(|| default_lags(n));
    let dy: Vec<f64> = sample.windows(2).map(|w| w[1] - w[0]).collect();
    let n_diff = dy.len();
    let rows = n_diff.checked_sub(lags).filter(|r| *r > 3 + lags).ok_or(Error::InsufficientData {
        required: 2 * lags + 5,
        available: n_diff,
    })?;
    let cols = 3 + lags;
    let mut x = DMatrix::<f64>::zeros(rows, cols);
    let mut y = DVector::<f64>::zeros(rows);
    for r in 0..rows {
        let t = r + lags;
        y[r] = dy[t];
        x[(r, 0)] = 1.0;
        x[(r, 1)] = sample[t];
        x[(r, 2)] = (t + 1) as f64;
        for j in 1..=lags {
            x[(r, 2 + j)] = dy[t - j];
        }
    }
    let xtx = x.transpose() * &x;
    let chol = xtx.cholesky().ok_or_else(|| Error::Singular("ADF regression".into()))?;
    let coef = chol.solve(&(x.transpose() * &y));
    let resid = &y - &x * &coef;
    let dof = (rows - cols) as f64;
    let s2 = resid.norm_squared() / dof;
    let inv = chol.inverse();
    let se = (s2 * inv[(1, 1)]).sqrt();
    if !(se > 0.0) || !se.is_finite() {
        return Err(Error::Singular("ADF regression has zero residual variance".into()));
    }
    let tau = coef[1] / se;
    Ok(TestReport::new("ADF", tau, adf_p_value(tau, n_diff), n, format!("lags={lags};regression=ct")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const WALK: [f64; 30] = [
        -1.738, -3.075, -4.436, -4.788, -7.1, -7.289, -8.246, -7.353, -6.396, -5.004, -4.236, -4.289, -3.429, -1.924,
        -2.578, -1.967, -2.01, -0.57, -1.407, -1.708, -1.346, -1.088, -2.727, -2.367, -2.486, -2.725, -2.881, -2.662,
        -4.478, -2.926,
    ];

    #[test]
    fn statistic_matches_independent_ols() {
        // numpy least squares on the same design.
        let r = adf_test(&WALK, None).unwrap();
        assert!((r.statistic - -2.414149751580154).abs() < 1e-9);
        assert_eq!(r.detail, "lags=3;regression=ct");
    }

    #[test]
    fn p_values_match_published_table_lookups() {
        assert!((adf_p_value(-3.05447, 49) - 0.15132).abs() < 5e-6);
        assert!((adf_p_value(-2.58739, 39) - 0.34294).abs() < 5e-6);
        assert_eq!(adf_p_value(-9.0, 49), 0.01);
        assert_eq!(adf_p_value(2.0, 49), 0.99);
    }

    #[test]
    fn scale_invariance() {
        let scaled: Vec<f64> = WALK.iter().map(|v| 7.25 * v).collect();
        let a = adf_test(&WALK, Some(2)).unwrap();
        let b = adf_test(&scaled, Some(2)).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-10);
    }

    #[test]
    fn short_or_degenerate_input() {
        assert!(adf_test(&WALK[..14], None).is_err());
        let line: Vec<f64> = (0..30).map(|t| t as f64).collect();
        assert!(adf_test(&line, None).is_err());
    }
}
