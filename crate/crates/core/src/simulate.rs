//! Synthetic Lee-Carter surfaces with known parameters.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::MortalitySurface;
use crate::error::{Error, Result};
use crate::lc::LcParameters;

/// Generating law for the raw (unconstrained) time index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum KappaLaw {
    /// `k_t = k_{t−1} + drift + σ ε_t`.
    RandomWalkDrift { start: f64, drift: f64, sigma: f64 },
    /// Linear with slope `slope_before` up to `break_at` (index), then
    /// `slope_after`, plus i.i.d. Gaussian noise.
    PiecewiseLinear { start: f64, slope_before: f64, slope_after: f64, break_at: usize, noise_sd: f64 },
    /// Supplied values.
    Fixed { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub age_min: u32,
    pub age_max: u32,
    pub year_min: i32,
    pub n_years: usize,
    /// Central exposure in every cell.
    pub exposure: f64,
    pub kappa: KappaLaw,
    /// Draw Poisson deaths; otherwise deaths equal their expectation.
    pub poisson: bool,
    pub seed: u64,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        Self {
            age_min: 0,
            age_max: 99,
            year_min: 1950,
            n_years: 69,
            exposure: 1e5,
            kappa: KappaLaw::RandomWalkDrift { start: 0.0, drift: -1.8, sigma: 1.0 },
            poisson: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub surface: MortalitySurface,
    /// Generating parameters in constrained form (Σβ = 1, Σκ = 0).
    pub truth: LcParameters,
}

/// Gompertz-like age level, from about −9 at age 0 to about −1 at 100.
pub fn default_alpha(age: u32) -> f64 {
    -9.0 + 0.08 * age as f64
}

/// Smooth positive age loading peaked in mid life (unnormalised).
pub fn default_beta_shape(age: u32) -> f64 {
    let z = (age as f64 - 55.0) / 35.0;
    0.25 + (-z * z).exp()
}

pub fn kappa_path(law: &KappaLaw, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    match law {
        KappaLaw::RandomWalkDrift { start, drift, sigma } => {
            let eps = Normal::new(0.0, *sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            let mut k = Vec::with_capacity(n);
            let mut v = *start;
            for t in 0..n {
                if t > 0 {
                    v += drift + eps.sample(rng);
                }
                k.push(v);
            }
            Ok(k)
        }
        KappaLaw::PiecewiseLinear { start, slope_before, slope_after, break_at, noise_sd } => {
            let eps = Normal::new(0.0, *noise_sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            Ok((0..n)
                .map(|t| {
                    let trend = if t <= *break_at {
                        start + slope_before * t as f64
                    } else {
                        start + slope_before * *break_at as f64 + slope_after * (t - break_at) as f64
                    };
                    trend + eps.sample(rng)
                })
                .collect())
        }
        KappaLaw::Fixed { values } => {
            if values.len() != n {
                return Err(Error::Dimension(format!("{} κ values for {n} years", values.len())));
            }
            Ok(values.clone())
        }
    }
}

pub fn simulate(spec: &SimulationSpec) -> Result<Simulated> {
    if spec.age_min > spec.age_max || spec.n_years < 2 {
        return Err(Error::InvalidArgument("simulation needs at least one age and two years".into()));
    }
    if !(spec.exposure > 0.0) {
        return Err(Error::InvalidArgument("exposure must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ages: Vec<u32> = (spec.age_min..=spec.age_max).collect();
    let years: Vec<i32> = (0..spec.n_years as i32).map(|t| spec.year_min + t).collect();
    let shape: Vec<f64> = ages.iter().map(|&a| default_beta_shape(a)).collect();
    let total: f64 = shape.iter().sum();
    let raw = LcParameters {
        ages: ages.clone(),
        years: years.clone(),
        alpha: ages.iter().map(|&a| default_alpha(a)).collect(),
        beta: shape.iter().map(|b| b / total).collect(),
        kappa: kappa_path(&spec.kappa, spec.n_years, &mut rng)?,
    };
    let truth = raw.constrained()?;
    let exposures = DMatrix::from_element(ages.len(), years.len(), spec.exposure);
    let mut deaths = DMatrix::zeros(ages.len(), years.len());
    for i in 0..ages.len() {
        for j in 0..years.len() {
            let mu = spec.exposure * truth.log_rate(i, j).exp();
            deaths[(i, j)] = if spec.poisson {
                Poisson::new(mu).map_err(|e| Error::InvalidArgument(e.to_string()))?.sample(&mut rng)
            } else {
                mu
            };
        }
    }
    Ok(Simulated { surface: MortalitySurface::new(ages, years, deaths, exposures)?, truth })
}

/// Renders one matrix of a surface as an HMD 1x1 table. The same value is
/// written to the female, male and total columns.
pub fn hmd_table(title: &str, surface: &MortalitySurface, values: &DMatrix<f64>) -> String {
    let mut out = format!("Synthetic, {title} (period 1x1)\n\n");
    out.push_str("  Year          Age             Female            Male           Total\n");
    for (j, year) in surface.years().iter().enumerate() {
        for (i, age) in surface.ages().iter().enumerate() {
            let v = values[(i, j)];
            let _ = writeln!(out, "  {year}  {age:>9}  {v:>17}  {v:>17}  {v:>17}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arima::fit_rwd;
    use crate::data::{build_surface, parse_hmd_table, Sex};
    use crate::lc::{fit_lc, LcFitOptions};

    #[test]
    fn deterministic_surface_recovers_truth() {
        let spec = SimulationSpec {
            age_min: 40,
            age_max: 49,
            n_years: 20,
            exposure: 1e6,
            poisson: false,
            ..Default::default()
        };
        let sim = simulate(&spec).unwrap();
        let fit = fit_lc(&sim.surface, &LcFitOptions::default()).unwrap();
        for (a, b) in fit.params.kappa.iter().zip(&sim.truth.kappa) {
            assert!((a - b).abs() < 1e-3);
        }
        for (a, b) in fit.params.beta.iter().zip(&sim.truth.beta) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn drift_is_recovered_from_poisson_surface() {
        let spec = SimulationSpec { age_min: 30, age_max: 89, n_years: 50, seed: 4, ..Default::default() };
        let sim = simulate(&spec).unwrap();
        let fit = fit_lc(&sim.surface, &LcFitOptions::default()).unwrap();
        let rwd = fit_rwd(&fit.params.kappa).unwrap();
        assert!((rwd.drift + 1.8).abs() < 0.2, "{}", rwd.drift);
    }

    #[test]
    fn seeded_and_hmd_round_trip() {
        let spec = SimulationSpec { age_min: 60, age_max: 62, n_years: 4, seed: 9, ..Default::default() };
        let a = simulate(&spec).unwrap();
        let b = simulate(&spec).unwrap();
        assert_eq!(a.surface, b.surface);
        let d = parse_hmd_table(&hmd_table("Deaths", &a.surface, a.surface.deaths()), Sex::Male).unwrap();
        let e = parse_hmd_table(&hmd_table("Exposures", &a.surface, a.surface.exposures()), Sex::Male).unwrap();
        let back = build_surface(&d, &e, 60, 62, 1950, 1953).unwrap();
        assert_eq!(back, a.surface);
    }

    #[test]
    fn piecewise_law_bends_at_break() {
        let law = KappaLaw::PiecewiseLinear { start: 10.0, slope_before: -3.0, slope_after: -1.0, break_at: 2, noise_sd: 0.0 };
        let k = kappa_path(&law, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(k, vec![10.0, 7.0, 4.0, 3.0, 2.0]);
    }
}
