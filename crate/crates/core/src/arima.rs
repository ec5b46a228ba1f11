//! ARIMA forecast recursion with a random-walk-with-drift estimator.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{mean, z_two_sided};
use crate::uncertainty::PredictionInterval;

/// How the innovation variance accumulates with the horizon `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiVarianceLaw {
    /// Variance `h·σ²`, half-width ∝ `sqrt(h)`.
    #[default]
    SqrtH,
    /// Variance `h²·σ²`, half-width ∝ `h`.
    LinearH,
}

impl PiVarianceLaw {
    pub fn as_str(self) -> &'static str {
        match self {
            PiVarianceLaw::SqrtH => "sqrt_h",
            PiVarianceLaw::LinearH => "linear_h",
        }
    }

    pub fn scale(self, h: usize) -> f64 {
        match self {
            PiVarianceLaw::SqrtH => (h as f64).sqrt(),
            PiVarianceLaw::LinearH => h as f64,
        }
    }
}

impl std::str::FromStr for PiVarianceLaw {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt_h" => Ok(Self::SqrtH),
            "linear_h" => Ok(Self::LinearH),
            other => Err(Error::InvalidArgument(format!("unknown PI variance law '{other}'"))),
        }
    }
}

/// ARIMA(p,d,q) with drift; `p` and `q` are the coefficient-vector lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaSpec {
    pub d: usize,
    pub drift: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    pub sigma_eps: f64,
}

impl ArimaSpec {
    pub fn p(&self) -> usize {
        self.ar.len()
    }

    pub fn q(&self) -> usize {
        self.ma.len()
    }

    pub fn random_walk(drift: f64, sigma_eps: f64) -> Self {
        Self { d: 1, drift, ar: vec![], ma: vec![], sigma_eps }
    }
}

/// Random walk with drift: mean and sample s.d. of the first differences.
pub fn fit_rwd(kappa: &[f64]) -> Result<ArimaSpec> {
    if kappa.len() < 3 {
        return Err(Error::InsufficientData { required: 3, available: kappa.len() });
    }
    let diffs: Vec<f64> = kappa.windows(2).map(|w| w[1] - w[0]).collect();
    let delta = mean(&diffs);
    let ss: f64 = diffs.iter().map(|d| (d - delta) * (d - delta)).sum();
    let sigma = (ss / (diffs.len() - 1) as f64).sqrt();
    Ok(ArimaSpec::random_walk(delta, sigma))
}

fn difference(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Conditional-mean forecasts for `h = 1..=horizon`, future shocks set to 0.
pub fn arima_forecast(spec: &ArimaSpec, history: &[f64], residual_history: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let needed = spec.p() + spec.d;
    if history.len() < needed.max(1) {
        return Err(Error::InsufficientData { required: needed.max(1), available: history.len() });
    }
    if residual_history.len() < spec.q() {
        return Err(Error::InsufficientData { required: spec.q(), available: residual_history.len() });
    }
    // Last value at every differencing level, for integration.
    let mut levels = vec![history.to_vec()];
    for _ in 0..spec.d {
        let next = difference(levels.last().unwrap());
        levels.push(next);
    }
    let mut w = levels[spec.d].clone();
    let mut eps: Vec<f64> = residual_history[residual_history.len() - spec.q()..].to_vec();
    let mut tails: Vec<f64> = levels[..spec.d].iter().map(|l| *l.last().unwrap()).collect();
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut next = spec.drift;
        for (i, phi) in spec.ar.iter().enumerate() {
            next += phi * w[w.len() - 1 - i];
        }
        for (j, theta) in spec.ma.iter().enumerate() {
            next += theta * eps[eps.len() - 1 - j];
        }
        w.push(next);
        eps.push(0.0);
        // Integrate back up through the differencing levels.
        let mut v = next;
        for tail in tails.iter_mut().rev() {
            v += *tail;
            *tail = v;
        }
        out.push(v);
    }
    Ok(out)
}

/// Half-widths `z_{α/2} · scale(h) · σ_ε` for `h = 1..=horizon`.
pub fn arima_half_widths(spec: &ArimaSpec, horizon: usize, alpha: f64, law: PiVarianceLaw) -> Vec<f64> {
    let z = z_two_sided(alpha);
    (1..=horizon).map(|h| z * law.scale(h) * spec.sigma_eps).collect()
}

/// Gaussian interval around `point`. With `beta_x`, the interval is in
/// log-rate space around `point` (already `α̂_x + β̂_x k̂`) with half-width
/// scaled by `|β̂_x|`.
pub fn arima_pi(
    spec: &ArimaSpec,
    years: Vec<i32>,
    point: Vec<f64>,
    alpha: f64,
    law: PiVarianceLaw,
    beta_x: Option<f64>,
) -> Result<PredictionInterval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let loading = beta_x.map_or(1.0, f64::abs);
    let half: Vec<f64> = arima_half_widths(spec, point.len(), alpha, law).into_iter().map(|w| w * loading).collect();
    PredictionInterval::symmetric(years, point, &half, alpha)
}

/// `horizon,point,lower,upper`.
pub fn forecast_csv(pi: &PredictionInterval) -> String {
    let mut out = String::from("horizon,point,lower,upper\n");
    for k in 0..pi.len() {
        let _ = writeln!(out, "{},{},{},{}", k + 1, pi.point[k], pi.lower[k], pi.upper[k]);
    }
    out
}
