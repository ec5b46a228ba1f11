//! Lee-Carter mortality modelling with a recurrent time-index forecaster.
//!
//! The crate fits a Poisson log-bilinear Lee-Carter model to an age × year
//! mortality surface, forecasts the period index with a single-layer LSTM,
//! and derives prediction intervals from a residual-bootstrap ensemble plus a
//! noise model. A random walk with drift provides the baseline forecaster.
//!
//! Module map:
//!
//! * [`data`] – HMD ingestion, [`MortalitySurface`], log death rates
//! * [`lc`] – Poisson Lee-Carter fitting, deviance residuals, point forecasts
//! * [`lstm`] – from-scratch LSTM, BPTT training, grid search, recursive forecasts
//! * [`arima`] – ARIMA forecast recursion, random walk with drift baseline
//! * [`ensemble`] – residual bootstrap of the surface and bagged LSTM ensembles
//! * [`uncertainty`] – total variance, noise model, κ and log-rate intervals
//! * [`diagnostics`] – Shapiro-Wilk, D'Agostino-Pearson, Jarque-Bera, ADF
//! * [`metrics`] – RMSE, PICP, MPIW
//! * [`pipeline`] – end-to-end orchestration used by the CLI
//! * [`simulate`] – synthetic surfaces with known ground truth

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` rejects NaN on purpose.

pub mod arima;
pub mod data;
pub mod diagnostics;
pub mod ensemble;
mod error;
pub mod lc;
pub mod lstm;
pub mod metrics;
pub mod pipeline;
pub mod simulate;
pub mod stats;
pub mod uncertainty;

pub use arima::{ArimaSpec, PiVarianceLaw};
pub use data::{LogRateSurface, MortalitySurface, Sex};
pub use diagnostics::TestReport;
pub use ensemble::{BaggedEstimate, EnsembleDistribution};
pub use error::{Error, Result};
pub use lc::{LcFitOptions, LcFitReport, LcParameters};
pub use lstm::{LstmConfig, LstmModel, StateCarry};
pub use metrics::{Denominator, MetricsReport};
pub use uncertainty::{NoiseModel, PredictionInterval, Spreading};
