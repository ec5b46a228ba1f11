//! End-to-end run: Lee-Carter fit, LSTM tuning, bootstrap ensemble, intervals,
//! baseline, diagnostics and backtest metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::arima::{arima_forecast, arima_pi, fit_rwd, forecast_csv, ArimaSpec, PiVarianceLaw};
use crate::data::{log_rates, MortalitySurface};
use crate::diagnostics::{battery, diagnostics_table_csv, TestReport};
use crate::ensemble::{bag, bag_literal, bootstrap_kappas, train_and_forecast_members, BaggedEstimate, EnsembleDistribution};
use crate::error::{Error, Result};
use crate::lc::{fit_lc, kappa_given_age_profile, LcFitOptions, LcFitReport};
use crate::lstm::{default_grid, grid_search, train, GridResult, LstmConfig, LstmModel};
use crate::metrics::{metrics_table_csv, MetricPolicy, MetricsReport, MetricsRow, RunLabel};
use crate::stats::mix_seed;
use crate::uncertainty::{
    kappa_pi, noise_diagnostics_gate, rate_pi, total_variance, GateDecision, NoiseModel, PredictionInterval, Spreading,
};

/// Seed stream identifiers, mixed with the master seed.
const STREAM_LSTM: u64 = 1;
const STREAM_BOOTSTRAP: u64 = 2;
const STREAM_ENSEMBLE: u64 = 3;

/// Noise spreading: chosen from the residual diagnostics or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpreadingChoice {
    Auto,
    Fixed(Spreading),
}

impl std::str::FromStr for SpreadingChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            other => other.parse().map(Self::Fixed),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Last training year.
    pub origin: i32,
    pub horizon: usize,
    pub alpha: f64,
    pub bootstrap_samples: usize,
    pub seed: u64,
    pub pi_variance_law: PiVarianceLaw,
    pub metric_policy: MetricPolicy,
    pub spreading: SpreadingChoice,
    pub literal_bagged_variance: bool,
    /// Template for every grid entry (activations, epochs, patience, …).
    pub lstm: LstmConfig,
    /// Explicit grid; `None` uses the default units × learning-rate grid.
    pub grid: Option<Vec<LstmConfig>>,
    pub report_ages: Vec<u32>,
    pub lc: LcFitOptions,
    pub label: RunLabel,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            origin: 2000,
            horizon: 18,
            alpha: 0.05,
            bootstrap_samples: 200,
            seed: 0,
            pi_variance_law: PiVarianceLaw::SqrtH,
            metric_policy: MetricPolicy::default(),
            spreading: SpreadingChoice::Auto,
            literal_bagged_variance: false,
            lstm: LstmConfig::default(),
            grid: None,
            report_ages: vec![45, 65, 85],
            lc: LcFitOptions::default(),
            label: RunLabel { country: "synthetic".into(), gender: "total".into(), period: String::new() },
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, surface: &MortalitySurface) -> Result<()> {
        let years = surface.years();
        let (first, last) = (years[0], years[years.len() - 1]);
        if self.origin < first || self.origin > last {
            return Err(Error::InvalidArgument(format!(
                "forecast origin {} is outside the data years {first}-{last}",
                self.origin
            )));
        }
        if self.origin - first + 1 < 10 {
            return Err(Error::InvalidArgument("at least 10 training years are required".into()));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument("alpha must lie in (0, 1)".into()));
        }
        if self.bootstrap_samples < 2 {
            return Err(Error::InvalidArgument("bootstrap samples must be at least 2".into()));
        }
        for age in &self.report_ages {
            if surface.age_index(*age).is_none() {
                return Err(Error::InvalidArgument(format!("report age {age} is outside the data ages")));
            }
        }
        Ok(())
    }

    /// The grid as searched, with the LSTM seed stream applied.
    pub fn grid_configs(&self) -> Vec<LstmConfig> {
        let seed = mix_seed(self.seed, STREAM_LSTM);
        match &self.grid {
            Some(g) => g.iter().map(|c| LstmConfig { seed, ..c.clone() }).collect(),
            None => default_grid(&LstmConfig { seed, ..self.lstm.clone() }),
        }
    }
}

/// Lee-Carter fit on the training window.
pub fn fit_training(surface: &MortalitySurface, cfg: &PipelineConfig) -> Result<(MortalitySurface, LcFitReport)> {
    cfg.validate(surface)?;
    let train = surface.slice_years(surface.years()[0], cfg.origin)?;
    let fit = fit_lc(&train, &cfg.lc)?;
    if !fit.converged {
        return Err(Error::DegenerateFit(format!("no convergence after {} sweeps", fit.sweeps)));
    }
    Ok((train, fit))
}

/// Held-out observations for the forecast years, when the data covers them.
#[derive(Debug, Clone)]
pub struct Holdout {
    pub kappa: Vec<f64>,
    pub log_rates: BTreeMap<u32, Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ForecastRun {
    pub config: PipelineConfig,
    pub fit: LcFitReport,
    pub training_kappa: Vec<f64>,
    pub grid: GridResult,
    pub tuned: LstmConfig,
    pub model: LstmModel,
    pub lstm_point: Vec<f64>,
    pub ensemble: EnsembleDistribution,
    pub bagged: BaggedEstimate,
    pub bagged_literal: Option<Vec<f64>>,
    pub diagnostics: Vec<TestReport>,
    pub gate: GateDecision,
    pub noise: NoiseModel,
    pub total_variance: Vec<f64>,
    pub kappa_pi_lstm: PredictionInterval,
    pub rwd: ArimaSpec,
    pub kappa_pi_arima: PredictionInterval,
    pub rate_pi_lstm: BTreeMap<u32, PredictionInterval>,
    pub rate_pi_arima: BTreeMap<u32, PredictionInterval>,
    pub holdout: Option<Holdout>,
    pub metrics: Option<(MetricsReport, MetricsReport)>,
    pub warnings: Vec<String>,
}

/// The full forecasting pipeline on one surface.
pub fn run_forecast(surface: &MortalitySurface, cfg: &PipelineConfig) -> Result<ForecastRun> {
    let (train_surface, fit) = fit_training(surface, cfg)?;
    let mut warnings = Vec::new();
    let kappa = fit.params.kappa.clone();
    let years: Vec<i32> = (1..=cfg.horizon as i32).map(|h| cfg.origin + h).collect();

    // Step 1: tune the architecture, then fit it to the observed index.
    let grid = grid_search(&kappa, &cfg.grid_configs())?;
    let tuned = grid.tuned();
    let model = train(&tuned, &kappa, None)?.model;
    let (fitted, state) = model.fitted(&kappa)?;
    let lstm_point = model.forecast_recursive(*kappa.last().unwrap(), &state, cfg.horizon)?;

    // Steps 2-5: bootstrap the surface, retrain per member, aggregate.
    let samples =
        bootstrap_kappas(&train_surface, &fit, cfg.bootstrap_samples, mix_seed(cfg.seed, STREAM_BOOTSTRAP), &cfg.lc)?;
    let ensemble = train_and_forecast_members(&tuned, &samples, &years, mix_seed(cfg.seed, STREAM_ENSEMBLE))?;
    let bagged = bag(&ensemble)?;
    let bagged_literal = if cfg.literal_bagged_variance { Some(bag_literal(&ensemble)?) } else { None };

    // Noise model on the training residuals of the tuned network.
    let residuals: Vec<f64> = kappa[1..].iter().zip(&fitted).map(|(k, f)| k - f).collect();
    let (diagnostics, diag_warnings) = battery(&residuals, None);
    warnings.extend(diag_warnings);
    let gate = noise_diagnostics_gate(&diagnostics);
    let spreading = match cfg.spreading {
        SpreadingChoice::Auto => {
            if let Some(w) = &gate.warning {
                warnings.push(w.clone());
            }
            gate.spreading
        }
        SpreadingChoice::Fixed(s) => s,
    };
    let noise = NoiseModel::from_residuals(residuals, spreading)?;
    let total = total_variance(&bagged, &noise);
    let kappa_pi_lstm = kappa_pi(years.clone(), lstm_point.clone(), &total, cfg.alpha)?;

    // Random walk with drift baseline.
    let rwd = fit_rwd(&kappa)?;
    let rwd_point = arima_forecast(&rwd, &kappa, &[], cfg.horizon)?;
    let kappa_pi_arima = arima_pi(&rwd, years.clone(), rwd_point, cfg.alpha, cfg.pi_variance_law, None)?;

    let mut rate_pi_lstm = BTreeMap::new();
    let mut rate_pi_arima = BTreeMap::new();
    for &age in &cfg.report_ages {
        rate_pi_lstm.insert(age, rate_pi(&fit.params, &kappa_pi_lstm, age)?);
        rate_pi_arima.insert(age, rate_pi(&fit.params, &kappa_pi_arima, age)?);
    }

    let holdout = holdout(surface, &fit, cfg)?;
    let metrics = match &holdout {
        Some(h) => Some((
            MetricsReport::compute(&h.kappa, &kappa_pi_arima, &h.log_rates, &rate_pi_arima, cfg.metric_policy)?,
            MetricsReport::compute(&h.kappa, &kappa_pi_lstm, &h.log_rates, &rate_pi_lstm, cfg.metric_policy)?,
        )),
        None => None,
    };

    Ok(ForecastRun {
        config: cfg.clone(),
        fit,
        training_kappa: kappa,
        grid,
        tuned,
        model,
        lstm_point,
        ensemble,
        bagged,
        bagged_literal,
        diagnostics,
        gate,
        noise,
        total_variance: total,
        kappa_pi_lstm,
        rwd,
        kappa_pi_arima,
        rate_pi_lstm,
        rate_pi_arima,
        holdout,
        metrics,
        warnings,
    })
}

/// Observed κ (profiled with the training age parameters) and log-rates for
/// the forecast years, if the surface extends that far.
pub fn holdout(surface: &MortalitySurface, fit: &LcFitReport, cfg: &PipelineConfig) -> Result<Option<Holdout>> {
    let last = surface.years()[surface.n_years() - 1];
    let end = cfg.origin + cfg.horizon as i32;
    if end > last {
        return Ok(None);
    }
    let test = surface.slice_years(cfg.origin + 1, end)?;
    let kappa = kappa_given_age_profile(&test, &fit.params.alpha, &fit.params.beta)?;
    let lr = log_rates(&test);
    let log_rates = cfg.report_ages.iter().map(|&a| (a, lr.age_row(a).unwrap_or_default())).collect();
    Ok(Some(Holdout { kappa, log_rates }))
}

fn series_csv(header: &str, years: &[i32], values: &[f64]) -> String {
    let mut out = format!("year,{header}\n");
    for (y, v) in years.iter().zip(values) {
        let _ = writeln!(out, "{y},{v}");
    }
    out
}

/// Residual matrix as `age,year,residual`.
pub fn residuals_csv(surface_ages: &[u32], surface_years: &[i32], fit: &LcFitReport) -> String {
    let mut out = String::from("age,year,residual\n");
    for (i, age) in surface_ages.iter().enumerate() {
        for (j, year) in surface_years.iter().enumerate() {
            let _ = writeln!(out, "{age},{year},{}", fit.deviance_residuals[(i, j)]);
        }
    }
    out
}

/// Deviance after every sweep as `sweep,deviance`.
pub fn deviance_trace_csv(fit: &LcFitReport) -> String {
    let mut out = String::from("sweep,deviance\n");
    for (k, d) in fit.deviance_trace.iter().enumerate() {
        let _ = writeln!(out, "{},{d}", k + 1);
    }
    out
}

impl ForecastRun {
    pub fn metrics_rows(&self) -> Vec<MetricsRow> {
        let mut rows = Vec::new();
        if let Some((arima, lstm)) = &self.metrics {
            rows.extend(arima.rows(&self.config.label, "ARIMA", "LC"));
            rows.extend(lstm.rows(&self.config.label, "LSTM", "LC-LSTM"));
        }
        rows
    }

    /// Every report file of the run as `(file name, contents)`.
    pub fn artifacts(&self) -> Vec<(String, String)> {
        let mut files = vec![
            ("lc_params.csv".to_string(), self.fit.params.to_csv()),
            ("deviance_trace.csv".to_string(), deviance_trace_csv(&self.fit)),
            ("kappa_pi_lstm.csv".to_string(), self.kappa_pi_lstm.to_csv()),
            ("kappa_pi_arima.csv".to_string(), self.kappa_pi_arima.to_csv()),
            ("arima_forecast.csv".to_string(), forecast_csv(&self.kappa_pi_arima)),
            ("lstm_point.csv".to_string(), series_csv("kappa_hat", &self.kappa_pi_lstm.years, &self.lstm_point)),
            ("ensemble_paths.csv".to_string(), self.ensemble.to_csv()),
            ("bagged.csv".to_string(), self.bagged.to_csv()),
            ("lstm_model.txt".to_string(), self.model.to_text()),
            ("grid_search.csv".to_string(), self.grid_csv()),
            ("diagnostics.csv".to_string(), diagnostics_table_csv(&self.config.label, &self.diagnostics)),
            ("noise.csv".to_string(), self.noise_csv()),
        ];
        for (age, pi) in &self.rate_pi_lstm {
            files.push((format!("rate_pi_lstm_age{age}.csv"), pi.to_csv()));
        }
        for (age, pi) in &self.rate_pi_arima {
            files.push((format!("rate_pi_arima_age{age}.csv"), pi.to_csv()));
        }
        if let Some(lit) = &self.bagged_literal {
            files.push(("bagged_variance_literal.csv".to_string(), series_csv("literal_variance", &self.bagged.years, lit)));
        }
        if self.metrics.is_some() {
            files.push(("metrics.csv".to_string(), metrics_table_csv(&self.metrics_rows())));
        }
        files
    }

    fn grid_csv(&self) -> String {
        let mut out = String::from("index,hidden_units,learning_rate,validation_mse,best_epoch,selected\n");
        let grid = self.config.grid_configs();
        for (k, cfg) in grid.iter().enumerate() {
            let score = self.grid.scores[k].map_or(String::from("diverged"), |s| s.to_string());
            let epoch = self.grid.epochs[k].map_or(String::new(), |e| e.to_string());
            let _ = writeln!(
                out,
                "{k},{},{},{score},{epoch},{}",
                cfg.hidden_units,
                cfg.learning_rate,
                u8::from(k == self.grid.best_index)
            );
        }
        out
    }

    fn noise_csv(&self) -> String {
        let mut out = String::from("key,value\n");
        let _ = writeln!(out, "sigma2_gamma,{}", self.noise.sigma2_gamma);
        let _ = writeln!(out, "spreading,{}", self.noise.spreading.as_str());
        let _ = writeln!(out, "gate_spreading,{}", self.gate.spreading.as_str());
        let _ = writeln!(out, "rwd_drift,{}", self.rwd.drift);
        let _ = writeln!(out, "rwd_sigma,{}", self.rwd.sigma_eps);
        out
    }
}
