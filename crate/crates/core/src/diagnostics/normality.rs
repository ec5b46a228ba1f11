//! Normality tests: Jarque-Bera, D'Agostino-Pearson, Shapiro-Wilk.

use super::TestReport;
use crate::error::{Error, Result};
use crate::stats::{normal_cdf, normal_quantile};

/// Upper tail of chi-square with 2 degrees of freedom.
fn chi2_2_sf(x: f64) -> f64 {
    (-0.5 * x).exp().clamp(0.0, 1.0)
}

/// Central moments m2, m3, m4 (population divisor).
fn central_moments(x: &[f64]) -> Result<(f64, f64, f64)> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("sample contains non-finite values".into()));
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if !(m2 > (1e-13 * mean.abs()).powi(2)) || m2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok((m2, m3, m4))
}

fn require(n: usize, min: usize) -> Result<()> {
    if n < min {
        Err(Error::InsufficientData { required: min, available: n })
    } else {
        Ok(())
    }
}

pub fn jarque_bera(sample: &[f64]) -> Result<TestReport> {
    let n = sample.len();
    require(n, 8)?;
    let (m2, m3, m4) = central_moments(sample)?;
    let s = m3 / m2.powf(1.5);
    let k = m4 / (m2 * m2);
    let jb = n as f64 / 6.0 * (s * s + (k - 3.0) * (k - 3.0) / 4.0);
    Ok(TestReport::new("Jarque-Bera", jb, chi2_2_sf(jb), n, format!("skewness={s};kurtosis={k}")))
}

/// Normal approximation to the sample skewness.
fn skew_z(n: f64, b1: f64) -> f64 {
    let y = b1 * ((n + 1.0) * (n + 3.0) / (6.0 * (n - 2.0))).sqrt();
    let beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let y = if y == 0.0 { 1.0 } else { y };
    let r = y / alpha;
    delta * (r + (r * r + 1.0).sqrt()).ln()
}

/// Anscombe-Glynn normal approximation to the sample kurtosis.
fn kurtosis_z(n: f64, b2: f64) -> f64 {
    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var_b2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    let x = (b2 - e) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    (term1 - term2) / (2.0 / (9.0 * a)).sqrt()
}

pub fn dagostino_pearson(sample: &[f64]) -> Result<TestReport> {
    let n = sample.len();
    require(n, 20)?;
    let (m2, m3, m4) = central_moments(sample)?;
    let nf = n as f64;
    let zs = skew_z(nf, m3 / m2.powf(1.5));
    let zk = kurtosis_z(nf, m4 / (m2 * m2));
    let k2 = zs * zs + zk * zk;
    Ok(TestReport::new("D'Agostino-Pearson", k2, chi2_2_sf(k2), n, format!("z_skew={zs};z_kurt={zk}")))
}

/// Horner evaluation with `c[0]` the constant term.
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// Half of the antisymmetric weight vector, largest first in magnitude.
fn sw_coefficients(n: usize) -> Vec<f64> {
    let nn2 = n / 2;
    if n == 3 {
        return vec![std::f64::consts::FRAC_1_SQRT_2];
    }
    let an = n as f64;
    let m: Vec<f64> = (1..=nn2).map(|i| normal_quantile((i as f64 - 0.375) / (an + 0.25))).collect();
    let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();
    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.07119, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
    // m[0] is the most negative score; weights are for the lower tail.
    let mut a = m.clone();
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    let (first_scaled, fac) = if n > 5 {
        let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
        a[1] = a2;
        (2, fac)
    } else {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        (1, fac)
    };
    a[0] = a1;
    for v in a.iter_mut().skip(first_scaled) {
        *v /= -fac;
    }
    a
}

fn sw_p_value(w: f64, n: usize) -> f64 {
    if n == 3 {
        let p = 6.0 / std::f64::consts::PI * (w.sqrt().asin() - (0.75f64).sqrt().asin());
        return p.clamp(0.0, 1.0);
    }
    if w >= 1.0 {
        return 1.0;
    }
    let an = n as f64;
    let y = (1.0 - w).ln();
    let (y, m, s) = if n <= 11 {
        let gamma = poly(&[-2.273, 0.459], an);
        if y >= gamma {
            return 1e-99;
        }
        let m = poly(&[0.544, -0.39978, 0.025054, -6.714e-4], an);
        let s = poly(&[1.3822, -0.77857, 0.062767, -0.0020322], an).exp();
        (-(gamma - y).ln(), m, s)
    } else {
        let xx = an.ln();
        let m = poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], xx);
        let s = poly(&[-0.4803, -0.082676, 0.0030302], xx).exp();
        (y, m, s)
    };
    (1.0 - normal_cdf((y - m) / s)).clamp(0.0, 1.0)
}

/// Royston's approximation to the Shapiro-Wilk W test.
pub fn shapiro_wilk(sample: &[f64]) -> Result<TestReport> {
    let n = sample.len();
    require(n, 3)?;
    if n > 5000 {
        return Err(Error::InvalidArgument("Shapiro-Wilk supports at most 5000 observations".into()));
    }
    central_moments(sample)?;
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let range = x[n - 1] - x[0];
    let half = sw_coefficients(n);
    // Full weight vector: −a for the lower half, +a mirrored for the upper half.
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            let j = n - 1 - i;
            match i.cmp(&j) {
                std::cmp::Ordering::Less => -half[i],
                std::cmp::Ordering::Greater => half[j],
                std::cmp::Ordering::Equal => 0.0,
            }
        })
        .collect();
    let xs: Vec<f64> = x.iter().map(|v| v / range).collect();
    let mean_a = weights.iter().sum::<f64>() / n as f64;
    let mean_x = xs.iter().sum::<f64>() / n as f64;
    let (mut ssa, mut ssx, mut sax) = (0.0, 0.0, 0.0);
    for (a, v) in weights.iter().zip(&xs) {
        let (da, dx) = (a - mean_a, v - mean_x);
        ssa += da * da;
        ssx += dx * dx;
        sax += da * dx;
    }
    let root = (ssa * ssx).sqrt();
    let w1 = (root - sax) * (root + sax) / (ssa * ssx);
    let w = (1.0 - w1).clamp(f64::MIN_POSITIVE, 1.0);
    Ok(TestReport::new("Shapiro-Wilk", w, sw_p_value(w, n), n, String::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    const SAMPLE: [f64; 30] = [
        -0.802, -1.324, -0.248, 0.42, 1.136, 0.11, -0.553, -0.785, 0.749, 1.635, 0.273, -1.233, -0.958, 1.6, 0.203,
        -1.732, -0.084, -1.163, -0.629, -0.488, -0.713, 0.553, -0.063, -0.589, 0.41, 0.83, -1.643, -0.257, -0.981,
        -0.173,
    ];

    // Reference values from scipy.stats (jarque_bera, normaltest, shapiro).
    #[test]
    fn matches_reference_implementation() {
        let jb = jarque_bera(&SAMPLE).unwrap();
        assert!((jb.statistic - 0.9187101870078882).abs() < 1e-10);
        assert!((jb.p_value - 0.6316908957358116).abs() < 1e-10);
        let dp = dagostino_pearson(&SAMPLE).unwrap();
        assert!((dp.statistic - 0.9016109094677809).abs() < 1e-9);
        assert!((dp.p_value - 0.6371147777860353).abs() < 1e-9);
        let sw = shapiro_wilk(&SAMPLE).unwrap();
        assert!((sw.statistic - 0.9763623628770064).abs() < 1e-6);
        assert!((sw.p_value - 0.7228101223212677).abs() < 1e-4);
    }

    #[test]
    fn shapiro_small_samples() {
        let sw = shapiro_wilk(&[1.0, 2.0, 4.0]).unwrap();
        assert!((sw.statistic - 0.9642857142857142).abs() < 1e-9);
        assert!((sw.p_value - 0.6368868450289689).abs() < 1e-6);
        let sw = shapiro_wilk(&[1.0, 2.0, 4.0, 7.0, 8.0]).unwrap();
        assert!((sw.statistic - 0.9228790835128339).abs() < 1e-6);
        assert!((sw.p_value - 0.548680715069829).abs() < 1e-4);
    }

    #[test]
    fn symmetric_sample_has_no_skew_component() {
        let x = [-2.0, -1.0, -0.5, 0.0, 0.0, 0.5, 1.0, 2.0];
        let jb = jarque_bera(&x).unwrap();
        let (m2, _, m4) = central_moments(&x).unwrap();
        let k = m4 / (m2 * m2);
        assert!((jb.statistic - 8.0 / 6.0 * (k - 3.0).powi(2) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn normal_scores_give_w_near_one() {
        let scores: Vec<f64> = (1..=50).map(|i| normal_quantile((i as f64 - 0.375) / 50.25)).collect();
        assert!(shapiro_wilk(&scores).unwrap().statistic > 0.99);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(matches!(jarque_bera(&[1.0; 10]), Err(Error::ZeroVariance)));
        assert!(shapiro_wilk(&[2.0; 5]).is_err());
        assert!(dagostino_pearson(&SAMPLE[..19]).is_err());
        assert!(jarque_bera(&SAMPLE[..7]).is_err());
    }

    #[test]
    fn affine_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..40).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.5 * v - 12.0).collect();
        for f in [jarque_bera, dagostino_pearson, shapiro_wilk] {
            let (a, b) = (f(&x).unwrap(), f(&y).unwrap());
            assert!((a.statistic - b.statistic).abs() < 1e-10, "{}", a.test_name);
            assert!((0.0..=1.0).contains(&a.p_value));
        }
    }
}
