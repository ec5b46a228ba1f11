//! Total-variance decomposition, noise model, and prediction intervals.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::diagnostics::TestReport;
use crate::ensemble::BaggedEstimate;
use crate::error::{Error, Result};
use crate::lc::LcParameters;
use crate::stats::{sample_variance, z_two_sided};

/// How the noise variance grows over the forecast horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spreading {
    /// `h · σ²_γ` at step `h`.
    RandomWalk,
    /// `σ²_γ` at every step.
    Constant,
}

impl Spreading {
    pub fn as_str(self) -> &'static str {
        match self {
            Spreading::RandomWalk => "random_walk",
            Spreading::Constant => "constant",
        }
    }

    pub fn factor(self, h: usize) -> f64 {
        match self {
            Spreading::RandomWalk => h as f64,
            Spreading::Constant => 1.0,
        }
    }
}

impl std::str::FromStr for Spreading {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_walk" => Ok(Spreading::RandomWalk),
            "constant" => Ok(Spreading::Constant),
            other => Err(Error::InvalidArgument(format!("unknown spreading '{other}'"))),
        }
    }
}

/// Residuals of the fitted time-index model on the training years.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub residuals: Vec<f64>,
    pub sigma2_gamma: f64,
    pub spreading: Spreading,
}

impl NoiseModel {
    pub fn from_residuals(residuals: Vec<f64>, spreading: Spreading) -> Result<Self> {
        if residuals.len() < 2 {
            return Err(Error::InsufficientData { required: 2, available: residuals.len() });
        }
        if residuals.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument("non-finite noise residual".into()));
        }
        let sigma2_gamma = sample_variance(&residuals);
        Ok(Self { residuals, sigma2_gamma, spreading })
    }

    /// `series[t] − fitted[t−1]` for the one-step fitted values of `series[1..]`.
    pub fn from_fitted(series: &[f64], fitted: &[f64], spreading: Spreading) -> Result<Self> {
        if series.len() != fitted.len() + 1 {
            return Err(Error::Dimension(format!(
                "{} fitted values for a series of length {}",
                fitted.len(),
                series.len()
            )));
        }
        Self::from_residuals(series[1..].iter().zip(fitted).map(|(k, f)| k - f).collect(), spreading)
    }
}

/// Bagged variance plus spread noise variance; the bias term is zero.
pub fn total_variance(bagged: &BaggedEstimate, noise: &NoiseModel) -> Vec<f64> {
    bagged
        .variance
        .iter()
        .enumerate()
        .map(|(k, v)| v + noise.spreading.factor(k + 1) * noise.sigma2_gamma)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionInterval {
    pub years: Vec<i32>,
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub alpha: f64,
}

impl PredictionInterval {
    pub fn new(years: Vec<i32>, point: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>, alpha: f64) -> Result<Self> {
        let n = years.len();
        if point.len() != n || lower.len() != n || upper.len() != n {
            return Err(Error::Dimension("interval vectors differ in length".into()));
        }
        check_alpha(alpha)?;
        for k in 0..n {
            if !(lower[k] <= point[k] && point[k] <= upper[k]) {
                return Err(Error::InvertedBounds(k));
            }
        }
        Ok(Self { years, point, lower, upper, alpha })
    }

    /// Symmetric interval `point ± half_width`.
    pub fn symmetric(years: Vec<i32>, point: Vec<f64>, half_width: &[f64], alpha: f64) -> Result<Self> {
        if half_width.len() != point.len() {
            return Err(Error::Dimension("half-width length differs from point length".into()));
        }
        if half_width.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("negative or NaN half-width".into()));
        }
        let lower = point.iter().zip(half_width).map(|(p, w)| p - w).collect();
        let upper = point.iter().zip(half_width).map(|(p, w)| p + w).collect();
        Self::new(years, point, lower, upper, alpha)
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.upper.iter().zip(&self.lower).map(|(u, l)| u - l).collect()
    }

    /// `year,point,lower,upper,alpha`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("year,point,lower,upper,alpha\n");
        for k in 0..self.len() {
            let _ = writeln!(out, "{},{},{},{},{}", self.years[k], self.point[k], self.lower[k], self.upper[k], self.alpha);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "year,point,lower,upper,alpha" => {}
            _ => return Err(Error::Parse { line: 1, msg: "expected header year,point,lower,upper,alpha".into() }),
        }
        let (mut years, mut point, mut lower, mut upper) = (vec![], vec![], vec![], vec![]);
        let mut alpha = None;
        for (k, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse { line: k + 1, msg: msg.to_string() };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(err("expected 5 columns"));
            }
            years.push(f[0].parse().map_err(|_| err("bad year"))?);
            point.push(f[1].parse().map_err(|_| err("bad point"))?);
            lower.push(f[2].parse().map_err(|_| err("bad lower"))?);
            upper.push(f[3].parse().map_err(|_| err("bad upper"))?);
            let a: f64 = f[4].parse().map_err(|_| err("bad alpha"))?;
            if alpha.is_some_and(|prev| prev != a) {
                return Err(err("alpha differs between rows"));
            }
            alpha = Some(a);
        }
        Self::new(years, point, lower, upper, alpha.ok_or(Error::EmptyInput)?)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// `k̂ ± z_{α/2} · sqrt(total_var)`.
pub fn kappa_pi(years: Vec<i32>, point: Vec<f64>, total_var: &[f64], alpha: f64) -> Result<PredictionInterval> {
    check_alpha(alpha)?;
    if total_var.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::InvalidArgument("variance must be non-negative".into()));
    }
    let z = z_two_sided(alpha);
    let half: Vec<f64> = total_var.iter().map(|v| z * v.sqrt()).collect();
    PredictionInterval::symmetric(years, point, &half, alpha)
}

/// Maps a κ interval through `α̂_x + β̂_x · κ` for one age.
pub fn rate_pi(params: &LcParameters, kappa: &PredictionInterval, age: u32) -> Result<PredictionInterval> {
    let i = params
        .age_index(age)
        .ok_or_else(|| Error::InvalidArgument(format!("age {age} outside the fitted range")))?;
    let (a, b) = (params.alpha[i], params.beta[i]);
    let map = |k: f64| a + b * k;
    let point = kappa.point.iter().map(|&k| map(k)).collect();
    let (mut lower, mut upper) = (Vec::with_capacity(kappa.len()), Vec::with_capacity(kappa.len()));
    for (&l, &u) in kappa.lower.iter().zip(&kappa.upper) {
        let (x, y) = (map(l), map(u));
        lower.push(x.min(y));
        upper.push(x.max(y));
    }
    PredictionInterval::new(kappa.years.clone(), point, lower, upper, kappa.alpha)
}

/// Outcome of checking the noise residuals against the random-walk reading.
#[derive(Debug, Clone, PartialEq)]
pub struct GateDecision {
    pub spreading: Spreading,
    pub adf_p_value: Option<f64>,
    pub normality: Vec<(String, f64)>,
    pub warning: Option<String>,
}

/// Random-walk spreading when ADF does not reject a unit root at 5% and no
/// normality test rejects at 1%; constant spreading with a warning otherwise.
pub fn noise_diagnostics_gate(reports: &[TestReport]) -> GateDecision {
    let adf = reports.iter().find(|r| r.test_name == "ADF").map(|r| r.p_value);
    let normality: Vec<(String, f64)> =
        reports.iter().filter(|r| r.test_name != "ADF").map(|r| (r.test_name.clone(), r.p_value)).collect();
    let mut reasons = Vec::new();
    match adf {
        Some(p) if p < 0.05 => reasons.push(format!("ADF rejects a unit root (p = {p:.5})")),
        None => reasons.push("ADF unavailable".to_string()),
        _ => {}
    }
    for (name, p) in &normality {
        if *p < 0.01 {
            reasons.push(format!("{name} rejects normality (p = {p:.5})"));
        }
    }
    if reasons.is_empty() {
        GateDecision { spreading: Spreading::RandomWalk, adf_p_value: adf, normality, warning: None }
    } else {
        GateDecision {
            spreading: Spreading::Constant,
            adf_p_value: adf,
            normality,
            warning: Some(format!("constant noise spreading used: {}", reasons.join("; "))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bagged(variance: Vec<f64>) -> BaggedEstimate {
        let n = variance.len();
        BaggedEstimate { years: (1..=n as i32).collect(), mean: vec![0.0; n], variance }
    }

    fn noise(s2: f64, spreading: Spreading) -> NoiseModel {
        NoiseModel { residuals: vec![], sigma2_gamma: s2, spreading }
    }

    #[test]
    fn total_variance_examples() {
        assert_eq!(total_variance(&bagged(vec![0.0; 3]), &noise(4.0, Spreading::RandomWalk)), vec![4.0, 8.0, 12.0]);
        assert_eq!(total_variance(&bagged(vec![0.3, 0.7]), &noise(0.0, Spreading::RandomWalk)), vec![0.3, 0.7]);
        assert_eq!(total_variance(&bagged(vec![1.0, 1.0]), &noise(1.0, Spreading::Constant)), vec![2.0, 2.0]);
    }

    #[test]
    fn noise_model_uses_sample_variance() {
        let n = NoiseModel::from_fitted(&[0.0, 1.0, 3.0, 2.0], &[0.0, 2.0, 5.0], Spreading::RandomWalk).unwrap();
        assert_eq!(n.residuals, vec![1.0, 1.0, -3.0]);
        assert!((n.sigma2_gamma - 16.0 / 3.0).abs() < 1e-12);
        assert!(NoiseModel::from_residuals(vec![], Spreading::Constant).is_err());
    }

    #[test]
    fn kappa_pi_examples() {
        let pi = kappa_pi(vec![2001, 2002], vec![-5.0, -6.0], &[0.0, 0.0], 0.05).unwrap();
        assert_eq!(pi.lower, pi.point);
        assert_eq!(pi.upper, pi.point);
        let pi = kappa_pi(vec![2001], vec![0.0], &[1.0], 0.05).unwrap();
        assert!((pi.upper[0] - 1.959963984540054).abs() < 1e-12);
        let wide = kappa_pi(vec![2001, 2002], vec![0.0, 0.0], &[1.0, 2.0], 0.01).unwrap();
        let narrow = kappa_pi(vec![2001, 2002], vec![0.0, 0.0], &[1.0, 2.0], 0.05).unwrap();
        for k in 0..2 {
            assert!(wide.lower[k] < narrow.lower[k] && wide.upper[k] > narrow.upper[k]);
        }
        assert!(kappa_pi(vec![2001], vec![0.0], &[1.0], 1.0).is_err());
    }

    fn params(alpha: f64, beta: f64) -> LcParameters {
        LcParameters { ages: vec![60], years: vec![2000], alpha: vec![alpha], beta: vec![beta], kappa: vec![0.0] }
    }

    #[test]
    fn rate_pi_examples() {
        let k = PredictionInterval::new(vec![2001], vec![-50.0], vec![-60.0], vec![-40.0], 0.05).unwrap();
        let r = rate_pi(&params(-4.0, 0.02), &k, 60).unwrap();
        assert!((r.lower[0] + 5.2).abs() < 1e-12 && (r.upper[0] + 4.8).abs() < 1e-12);
        let r = rate_pi(&params(-4.0, 0.0), &k, 60).unwrap();
        assert_eq!((r.lower[0], r.upper[0]), (-4.0, -4.0));
        let r = rate_pi(&params(-4.0, -0.02), &k, 60).unwrap();
        assert!((r.lower[0] - (-4.0 - 0.02 * -40.0)).abs() < 1e-12);
        assert!(r.lower[0] <= r.point[0] && r.point[0] <= r.upper[0]);
        assert!(rate_pi(&params(-4.0, 0.02), &k, 61).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let pi = kappa_pi(vec![2001, 2002, 2003], vec![-1.5, -2.25, -3.125], &[0.1, 0.2, 0.3], 0.05).unwrap();
        assert_eq!(PredictionInterval::from_csv(&pi.to_csv()).unwrap(), pi);
        assert!(PredictionInterval::from_csv("year,point\n").is_err());
    }

    fn report(name: &str, p: f64) -> TestReport {
        TestReport { test_name: name.into(), statistic: 0.0, p_value: p, n: 50, detail: String::new() }
    }

    #[test]
    fn gate_policy() {
        let ok = noise_diagnostics_gate(&[
            report("ADF", 0.15132),
            report("Shapiro-Wilk", 0.4),
            report("D'Agostino-Pearson", 0.3),
            report("Jarque-Bera", 0.5),
        ]);
        assert_eq!(ok.spreading, Spreading::RandomWalk);
        assert!(ok.warning.is_none());
        let bad = noise_diagnostics_gate(&[report("ADF", 0.01), report("Jarque-Bera", 0.5)]);
        assert_eq!(bad.spreading, Spreading::Constant);
        assert!(bad.warning.unwrap().contains("ADF"));
        let non_normal = noise_diagnostics_gate(&[report("ADF", 0.5), report("Jarque-Bera", 0.001)]);
        assert_eq!(non_normal.spreading, Spreading::Constant);
    }
}
