//! Run configuration: an optional TOML file merged with command-line flags.
//! Flags win over the file; unset values fall back to library defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use lclstm::arima::PiVarianceLaw;
use lclstm::data::{build_surface, parse_hmd_table};
use lclstm::lstm::{CellActivation, LstmConfig, Optimizer, RecurrentActivation};
use lclstm::metrics::{MetricPolicy, RunLabel};
use lclstm::pipeline::{PipelineConfig, SpreadingChoice};
use lclstm::{Denominator, MortalitySurface, Sex};

/// Network and grid settings (`[lstm]` table in the config file).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct LstmSection {
    /// Grid of hidden-unit counts (comma separated).
    #[arg(long = "grid-units", value_delimiter = ',')]
    pub grid_units: Option<Vec<usize>>,
    /// Grid of learning rates (comma separated).
    #[arg(long = "grid-learning-rates", value_delimiter = ',')]
    pub grid_learning_rates: Option<Vec<f64>>,
    /// Upper bound on gradient updates per network.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Early-stopping patience, in epochs.
    #[arg(long)]
    pub patience: Option<usize>,
    /// relu | tanh
    #[arg(long)]
    pub cell_activation: Option<CellActivation>,
    /// tanh | sigmoid | cell
    #[arg(long)]
    pub recurrent_activation: Option<RecurrentActivation>,
    /// sgd | adam
    #[arg(long)]
    pub optimizer: Option<Optimizer>,
    /// Global gradient-norm clip.
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

/// Everything a run needs. Every field is optional so that file and flags
/// can be layered.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// HMD 1x1 deaths table.
    #[arg(long)]
    pub data_deaths: Option<PathBuf>,
    /// HMD 1x1 exposures table.
    #[arg(long)]
    pub data_exposures: Option<PathBuf>,
    /// female | male | total
    #[arg(long)]
    pub gender: Option<String>,
    /// Country or population label used in report tables.
    #[arg(long)]
    pub country: Option<String>,
    /// Age range, e.g. `0-100`; defaults to the data's ages, capped at 100.
    #[arg(long)]
    pub ages: Option<String>,
    /// Year range, e.g. `1950-2018`; defaults to the years in the data.
    #[arg(long)]
    pub years: Option<String>,
    /// Last training year.
    #[arg(long)]
    pub origin: Option<i32>,
    /// Number of forecast years.
    #[arg(long, conflicts_with = "horizon_end")]
    pub horizon: Option<usize>,
    /// Last forecast year (alternative to --horizon).
    #[arg(long)]
    pub horizon_end: Option<i32>,
    /// Interval level: 0.05 gives 95% intervals.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Ensemble size B.
    #[arg(long)]
    pub bootstrap_samples: Option<usize>,
    /// Master seed; every random stream is derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// sqrt_h | linear_h
    #[arg(long)]
    pub pi_variance_law: Option<PiVarianceLaw>,
    /// Use s − 1 as the denominator of every metric.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub metrics_literal: Option<bool>,
    /// s | s-1, for PICP and MPIW.
    #[arg(long)]
    pub picp_denominator: Option<String>,
    /// Also export the unsquared bagged-variance formula.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub literal_bagged_variance: Option<bool>,
    /// auto | random_walk | constant
    #[arg(long)]
    pub spreading: Option<String>,
    /// Ages with log-rate intervals and metrics (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub report_ages: Option<Vec<u32>>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(default)]
    pub lstm: LstmSection,
}

macro_rules! layer {
    ($dst:expr, $src:expr, $($field:ident),+) => {
        $( if $src.$field.is_some() { $dst.$field = $src.$field.clone(); } )+
    };
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    /// `self` with every value set in `flags` replaced.
    pub fn overlay(mut self, flags: &RunConfig) -> Self {
        layer!(
            self, flags, data_deaths, data_exposures, gender, country, ages, years, origin, horizon, horizon_end, alpha,
            bootstrap_samples, seed, pi_variance_law, metrics_literal, picp_denominator, literal_bagged_variance, spreading,
            report_ages, out
        );
        if flags.horizon.is_some() {
            self.horizon_end = None;
        }
        if flags.horizon_end.is_some() {
            self.horizon = None;
        }
        layer!(
            self.lstm, flags.lstm, grid_units, grid_learning_rates, max_epochs, patience, cell_activation,
            recurrent_activation, optimizer, clip_norm
        );
        self
    }

    pub fn load(config: Option<&Path>, flags: &RunConfig) -> Result<Self> {
        let base = match config {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        Ok(base.overlay(flags))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn sex(&self) -> Result<Sex> {
        Ok(self.gender.as_deref().unwrap_or("total").parse()?)
    }

    /// Reads and validates the surface named by the data paths.
    pub fn load_surface(&self) -> Result<MortalitySurface> {
        let deaths_path = self.data_deaths.as_ref().context("no deaths file given (--data-deaths)")?;
        let exposures_path = self.data_exposures.as_ref().context("no exposures file given (--data-exposures)")?;
        let sex = self.sex()?;
        let deaths = read_table(deaths_path, sex)?;
        let exposures = read_table(exposures_path, sex)?;
        let (age_min, age_max) = match &self.ages {
            Some(r) => parse_range(r, "ages")?,
            None => {
                let lo = deaths.iter().map(|r| r.age).min().unwrap_or(0);
                let hi = deaths.iter().map(|r| r.age).max().unwrap_or(0);
                (lo, hi.min(100).max(lo))
            }
        };
        let (year_min, year_max) = match &self.years {
            Some(r) => parse_range(r, "years")?,
            None => (
                deaths.iter().map(|r| r.year).min().unwrap_or(0),
                deaths.iter().map(|r| r.year).max().unwrap_or(0),
            ),
        };
        build_surface(&deaths, &exposures, age_min, age_max, year_min, year_max).with_context(|| {
            format!("building the surface from {} and {}", deaths_path.display(), exposures_path.display())
        })
    }

    pub fn origin(&self) -> i32 {
        self.origin.unwrap_or(2000)
    }

    pub fn horizon(&self) -> Result<usize> {
        match (self.horizon, self.horizon_end) {
            (Some(h), _) => Ok(h),
            (None, Some(end)) => {
                if end <= self.origin() {
                    bail!("horizon end {end} must lie after the forecast origin {}", self.origin());
                }
                Ok((end - self.origin()) as usize)
            }
            (None, None) => Ok(18),
        }
    }

    pub fn metric_policy(&self) -> Result<MetricPolicy> {
        if self.metrics_literal.unwrap_or(false) {
            return Ok(MetricPolicy::literal());
        }
        let mut policy = MetricPolicy::default();
        if let Some(d) = &self.picp_denominator {
            policy.interval = d.parse::<Denominator>()?;
        }
        Ok(policy)
    }

    pub fn pipeline(&self, surface: &MortalitySurface) -> Result<PipelineConfig> {
        let defaults = PipelineConfig::default();
        let mut lstm = LstmConfig::default();
        let l = &self.lstm;
        if let Some(v) = l.max_epochs {
            lstm.max_epochs = v;
        }
        if let Some(v) = l.patience {
            lstm.patience = v;
        }
        if let Some(v) = l.cell_activation {
            lstm.cell_activation = v;
        }
        if let Some(v) = l.recurrent_activation {
            lstm.recurrent_activation = v;
        }
        if let Some(v) = l.optimizer {
            lstm.optimizer = v;
        }
        if let Some(v) = l.clip_norm {
            lstm.clip_norm = v;
        }
        lstm.patience = lstm.patience.min(lstm.max_epochs);
        let grid = match (&l.grid_units, &l.grid_learning_rates) {
            (None, None) => None,
            (units, rates) => {
                let units = units.clone().unwrap_or_else(|| vec![5, 10, 15, 20, 25]);
                let rates = rates.clone().unwrap_or_else(|| vec![0.01, 0.005]);
                Some(
                    units
                        .iter()
                        .flat_map(|&u| {
                            let lstm = &lstm;
                            rates.iter().map(move |&r| LstmConfig { hidden_units: u, learning_rate: r, ..lstm.clone() })
                        })
                        .collect(),
                )
            }
        };
        let origin = self.origin();
        let first = surface.years()[0];
        let cfg = PipelineConfig {
            origin,
            horizon: self.horizon()?,
            alpha: self.alpha.unwrap_or(defaults.alpha),
            bootstrap_samples: self.bootstrap_samples.unwrap_or(defaults.bootstrap_samples),
            seed: self.seed.unwrap_or(defaults.seed),
            pi_variance_law: self.pi_variance_law.unwrap_or(defaults.pi_variance_law),
            metric_policy: self.metric_policy()?,
            spreading: self.spreading.as_deref().unwrap_or("auto").parse::<SpreadingChoice>()?,
            literal_bagged_variance: self.literal_bagged_variance.unwrap_or(false),
            lstm,
            grid,
            report_ages: self.report_ages.clone().unwrap_or_else(|| default_report_ages(surface, &defaults.report_ages)),
            lc: defaults.lc,
            label: RunLabel {
                country: self.country.clone().unwrap_or_else(|| "unknown".into()),
                gender: self.sex()?.as_str().into(),
                period: format!("{first}-{origin}"),
            },
        };
        cfg.validate(surface)?;
        Ok(cfg)
    }
}

/// Default ages that the data covers; the middle age if none are.
fn default_report_ages(surface: &MortalitySurface, defaults: &[u32]) -> Vec<u32> {
    let ages = surface.ages();
    let kept: Vec<u32> = defaults.iter().copied().filter(|a| ages.contains(a)).collect();
    if kept.is_empty() {
        vec![ages[ages.len() / 2]]
    } else {
        kept
    }
}

fn read_table(path: &Path, sex: Sex) -> Result<Vec<lclstm::data::HmdRow>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read data file {}", path.display()))?;
    parse_hmd_table(&text, sex).with_context(|| format!("cannot parse HMD table {}", path.display()))
}

/// `a-b` (inclusive) or a single value.
pub fn parse_range<T>(text: &str, what: &str) -> Result<(T, T)>
where
    T: std::str::FromStr + PartialOrd + Copy,
{
    let parse = |s: &str| s.trim().parse::<T>().ok();
    let (lo, hi) = match text.split_once('-') {
        Some((a, b)) => (parse(a), parse(b)),
        None => (parse(text), parse(text)),
    };
    match (lo, hi) {
        (Some(lo), Some(hi)) if lo <= hi => Ok((lo, hi)),
        _ => bail!("invalid {what} range '{text}' (expected e.g. 1950-2018)"),
    }
}
