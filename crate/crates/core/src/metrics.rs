//! Point and interval forecast accuracy: RMSE, PICP, MPIW.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::PredictionInterval;

/// Divisor applied to a sum over `s` forecast points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    S,
    SMinus1,
}

impl Denominator {
    pub fn value(self, s: usize) -> f64 {
        match self {
            Denominator::S => s as f64,
            Denominator::SMinus1 => s as f64 - 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Denominator::S => "s",
            Denominator::SMinus1 => "s_minus_1",
        }
    }
}

impl std::str::FromStr for Denominator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s" => Ok(Self::S),
            "s_minus_1" | "s-1" => Ok(Self::SMinus1),
            other => Err(Error::InvalidArgument(format!("unknown denominator '{other}'"))),
        }
    }
}

/// Denominators for the point and interval metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MetricPolicy {
    pub rmse: Denominator,
    pub interval: Denominator,
}

impl Default for MetricPolicy {
    fn default() -> Self {
        Self { rmse: Denominator::SMinus1, interval: Denominator::S }
    }
}

impl MetricPolicy {
    /// `s − 1` everywhere.
    pub fn literal() -> Self {
        Self { rmse: Denominator::SMinus1, interval: Denominator::SMinus1 }
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("length mismatch: {a} vs {b}")));
    }
    if a < 2 {
        return Err(Error::InsufficientData { required: 2, available: a });
    }
    Ok(())
}

fn check_bounds(lower: &[f64], upper: &[f64]) -> Result<()> {
    match lower.iter().zip(upper).position(|(l, u)| !(l <= u)) {
        Some(k) => Err(Error::InvertedBounds(k)),
        None => Ok(()),
    }
}

pub fn rmse(actual: &[f64], predicted: &[f64], denom: Denominator) -> Result<f64> {
    check_len(actual.len(), predicted.len())?;
    let ss: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok((ss / denom.value(actual.len())).sqrt())
}

/// Share of observed values falling inside `[lower, upper]`.
pub fn picp(actual: &[f64], lower: &[f64], upper: &[f64], denom: Denominator) -> Result<f64> {
    check_len(actual.len(), lower.len())?;
    check_len(lower.len(), upper.len())?;
    check_bounds(lower, upper)?;
    let inside = actual.iter().zip(lower.iter().zip(upper)).filter(|(a, (l, u))| *l <= *a && *a <= *u).count();
    Ok(inside as f64 / denom.value(actual.len()))
}

pub fn mpiw(lower: &[f64], upper: &[f64], denom: Denominator) -> Result<f64> {
    check_len(lower.len(), upper.len())?;
    check_bounds(lower, upper)?;
    let total: f64 = lower.iter().zip(upper).map(|(l, u)| u - l).sum();
    Ok(total / denom.value(lower.len()))
}

/// One evaluated series (κ or a single age's log-rates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesMetrics {
    pub rmse: f64,
    pub picp: f64,
    pub mpiw: f64,
}

impl SeriesMetrics {
    /// Cells with a non-finite observation (zero deaths on the log scale) are
    /// left out.
    pub fn compute(actual: &[f64], pi: &PredictionInterval, policy: MetricPolicy) -> Result<Self> {
        check_len(actual.len(), pi.len())?;
        let keep: Vec<usize> = (0..actual.len()).filter(|&k| actual[k].is_finite()).collect();
        let pick = |v: &[f64]| keep.iter().map(|&k| v[k]).collect::<Vec<f64>>();
        let (a, p, l, u) = (pick(actual), pick(&pi.point), pick(&pi.lower), pick(&pi.upper));
        Ok(Self {
            rmse: rmse(&a, &p, policy.rmse)?,
            picp: picp(&a, &l, &u, policy.interval)?,
            mpiw: mpiw(&l, &u, policy.interval)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub kappa: SeriesMetrics,
    pub rates: BTreeMap<u32, SeriesMetrics>,
    pub horizon: usize,
    pub alpha: f64,
}

impl MetricsReport {
    pub fn compute(
        actual_kappa: &[f64],
        kappa_pi: &PredictionInterval,
        actual_rates: &BTreeMap<u32, Vec<f64>>,
        rate_pis: &BTreeMap<u32, PredictionInterval>,
        policy: MetricPolicy,
    ) -> Result<Self> {
        let kappa = SeriesMetrics::compute(actual_kappa, kappa_pi, policy)?;
        let mut rates = BTreeMap::new();
        for (age, pi) in rate_pis {
            let actual = actual_rates
                .get(age)
                .ok_or_else(|| Error::InvalidArgument(format!("no observed log-rates for age {age}")))?;
            rates.insert(*age, SeriesMetrics::compute(actual, pi, policy)?);
        }
        Ok(Self { kappa, rates, horizon: kappa_pi.len(), alpha: kappa_pi.alpha })
    }

    /// Table rows: one for κ, one per age.
    pub fn rows(&self, label: &RunLabel, kappa_model: &str, rate_model: &str) -> Vec<MetricsRow> {
        let mut out = vec![MetricsRow::new(label, kappa_model, "kappa".into(), self.kappa)];
        for (age, m) in &self.rates {
            out.push(MetricsRow::new(label, rate_model, format!("logm_{age}"), *m));
        }
        out
    }
}

/// Country / gender / period identification for report tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLabel {
    pub country: String,
    pub gender: String,
    pub period: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub country: String,
    pub gender: String,
    pub period: String,
    pub model: String,
    pub series: String,
    pub metrics: SeriesMetrics,
}

impl MetricsRow {
    fn new(label: &RunLabel, model: &str, series: String, metrics: SeriesMetrics) -> Self {
        Self {
            country: label.country.clone(),
            gender: label.gender.clone(),
            period: label.period.clone(),
            model: model.into(),
            series,
            metrics,
        }
    }
}

/// `country,gender,period,model,series,rmse,picp,mpiw`.
pub fn metrics_table_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("country,gender,period,model,series,rmse,picp,mpiw\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.country, r.gender, r.period, r.model, r.series, r.metrics.rmse, r.metrics.picp, r.metrics.mpiw
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], Denominator::SMinus1).unwrap(), 0.0);
        let r = rmse(&[0.0, 0.0], &[1.0, 1.0], Denominator::SMinus1).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        assert!(rmse(&[0.0, 0.0], &[1.0], Denominator::S).is_err());
    }

    #[test]
    fn picp_examples() {
        let actual = vec![0.0; 18];
        let lo = vec![-1.0; 18];
        let hi = vec![1.0; 18];
        assert_eq!(picp(&actual, &lo, &hi, Denominator::S).unwrap(), 1.0);
        assert!((picp(&actual, &lo, &hi, Denominator::SMinus1).unwrap() - 18.0 / 17.0).abs() < 1e-12);
        assert_eq!(picp(&[5.0; 18], &lo, &hi, Denominator::S).unwrap(), 0.0);
        let mut a = vec![5.0; 18];
        a[..6].fill(0.0);
        let p = picp(&a, &lo, &hi, Denominator::S).unwrap();
        assert!((p - 0.333).abs() < 5e-4);
        assert!(picp(&actual, &hi, &lo, Denominator::S).is_err());
    }

    #[test]
    fn mpiw_examples() {
        assert_eq!(mpiw(&[1.0, 2.0], &[1.0, 2.0], Denominator::S).unwrap(), 0.0);
        assert_eq!(mpiw(&[0.0; 18], &[2.0; 18], Denominator::S).unwrap(), 2.0);
        assert!((mpiw(&[0.0; 18], &[2.0; 18], Denominator::SMinus1).unwrap() - 36.0 / 17.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn widening_never_lowers_coverage(
            data in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.0f64..5.0, 0.0f64..3.0), 2..40)
        ) {
            let actual: Vec<f64> = data.iter().map(|d| d.0).collect();
            let lower: Vec<f64> = data.iter().map(|d| d.1).collect();
            let upper: Vec<f64> = data.iter().map(|d| d.1 + d.2).collect();
            let lower2: Vec<f64> = lower.iter().zip(&data).map(|(l, d)| l - d.3).collect();
            let upper2: Vec<f64> = upper.iter().zip(&data).map(|(u, d)| u + d.3).collect();
            let a = picp(&actual, &lower, &upper, Denominator::S).unwrap();
            let b = picp(&actual, &lower2, &upper2, Denominator::S).unwrap();
            prop_assert!(b >= a);
            let mean_width = upper.iter().zip(&lower).map(|(u, l)| u - l).sum::<f64>() / actual.len() as f64;
            prop_assert_eq!(mpiw(&lower, &upper, Denominator::S).unwrap(), mean_width);
        }

        #[test]
        fn rmse_is_permutation_invariant(pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..30), shift in 0usize..30) {
            let (a, p): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
            let mut rotated = pairs.clone();
            rotated.rotate_left(shift % pairs.len());
            let (ra, rp): (Vec<f64>, Vec<f64>) = rotated.into_iter().unzip();
            let x = rmse(&a, &p, Denominator::SMinus1).unwrap();
            let y = rmse(&ra, &rp, Denominator::SMinus1).unwrap();
            prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0));
        }
    }
}
