//! Single-hidden-layer LSTM regressor for the Lee-Carter time index.
//!
//! One scalar input, `hidden_units` memory cells, one linear output:
//!
//! ```text
//! f = σ(W_f x + U_f h + b_f)      i = σ(W_i x + U_i h + b_i)
//! o = σ(W_o x + U_o h + b_o)      g = cell_act(W_c x + U_c h + b_c)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ cell_act(c')
//! y  = V · h' + b_out
//! ```
//!
//! The series is fed as one ordered sequence with the state carried across
//! steps; the output at step `t` predicts the value at `t + 1`.

mod grid;
mod io;
mod train;

pub use grid::{default_grid, grid_search, GridResult};
pub use train::{loss_and_gradient, train, TrainOutcome};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellActivation {
    Tanh,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateActivation {
    Sigmoid,
}

/// Candidate transform of the recurrent affine map. `Cell` reuses
/// `cell_activation`, so the same function is used in both slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecurrentActivation {
    Cell,
    Tanh,
    Sigmoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scaling {
    /// Min-max onto `[-1, 1]`, fitted on the training series.
    Minmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam,
}

macro_rules! names {
    ($t:ty { $($v:ident => $s:literal),+ $(,)? }) => {
        impl $t {
            pub fn as_str(self) -> &'static str {
                match self { $(Self::$v => $s),+ }
            }
        }
        impl std::str::FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok(Self::$v),)+
                    other => Err(Error::InvalidArgument(format!(
                        concat!("unknown ", stringify!($t), " '{}'"), other
                    ))),
                }
            }
        }
    };
}

names!(CellActivation { Tanh => "tanh", Relu => "relu" });
names!(GateActivation { Sigmoid => "sigmoid" });
names!(RecurrentActivation { Cell => "cell", Tanh => "tanh", Sigmoid => "sigmoid" });
names!(OutputActivation { Linear => "linear" });
names!(Scaling { Minmax => "minmax" });
names!(Optimizer { Sgd => "sgd", Adam => "adam" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub hidden_units: usize,
    pub cell_activation: CellActivation,
    pub gate_activation: GateActivation,
    pub recurrent_activation: RecurrentActivation,
    pub output_activation: OutputActivation,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub scaling: Scaling,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden_units: 10,
            cell_activation: CellActivation::Relu,
            gate_activation: GateActivation::Sigmoid,
            recurrent_activation: RecurrentActivation::Tanh,
            output_activation: OutputActivation::Linear,
            optimizer: Optimizer::Sgd,
            learning_rate: 0.01,
            max_epochs: 2000,
            patience: 100,
            clip_norm: 5.0,
            seed: 0,
            scaling: Scaling::Minmax,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_units == 0 {
            return Err(Error::InvalidArgument("hidden_units must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidArgument("patience cannot exceed max_epochs".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::InvalidArgument("clip_norm must be positive".into()));
        }
        Ok(())
    }
}

/// Min-max map of the training range onto `[-1, 1]`. A constant series maps
/// to 0 by translation only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaler {
    pub min: f64,
    pub max: f64,
}

impl Scaler {
    pub fn fit(series: &[f64]) -> Self {
        let min = series.iter().copied().fold(f64::INFINITY, f64::min);
        let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { min, max }
    }

    fn centre_and_half_range(&self) -> (f64, f64) {
        let half = 0.5 * (self.max - self.min);
        let centre = 0.5 * (self.max + self.min);
        if half > 0.0 {
            (centre, half)
        } else {
            (self.min, 1.0)
        }
    }

    pub fn scale(&self, x: f64) -> f64 {
        let (c, h) = self.centre_and_half_range();
        (x - c) / h
    }

    pub fn unscale(&self, y: f64) -> f64 {
        let (c, h) = self.centre_and_half_range();
        y * h + c
    }

    /// Factor converting a scaled-unit variance into κ units.
    pub fn variance_factor(&self) -> f64 {
        let (_, h) = self.centre_and_half_range();
        h * h
    }
}

/// Hidden and memory-cell vectors carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCarry {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl StateCarry {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

pub(crate) const GATES: [&str; 4] = ["f", "i", "o", "c"];
const F: usize = 0;
const I: usize = 1;
const O: usize = 2;
const C: usize = 3;

/// Flat parameter vector with named views.
///
/// Layout: for each gate in `f, i, o, c`: `W` (H), `U` (H×H, row-major), `b`
/// (H); then `V` (H) and `b_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub hidden: usize,
    pub data: Vec<f64>,
}

impl Params {
    pub fn len_for(hidden: usize) -> usize {
        4 * (2 * hidden + hidden * hidden) + hidden + 1
    }

    pub fn zeros(hidden: usize) -> Self {
        Self { hidden, data: vec![0.0; Self::len_for(hidden)] }
    }

    fn gate_base(&self, g: usize) -> usize {
        g * (2 * self.hidden + self.hidden * self.hidden)
    }

    pub fn w_range(&self, g: usize) -> std::ops::Range<usize> {
        let b = self.gate_base(g);
        b..b + self.hidden
    }

    pub fn u_range(&self, g: usize) -> std::ops::Range<usize> {
        let b = self.gate_base(g) + self.hidden;
        b..b + self.hidden * self.hidden
    }

    pub fn b_range(&self, g: usize) -> std::ops::Range<usize> {
        let b = self.gate_base(g) + self.hidden + self.hidden * self.hidden;
        b..b + self.hidden
    }

    pub fn v_range(&self) -> std::ops::Range<usize> {
        let b = 4 * (2 * self.hidden + self.hidden * self.hidden);
        b..b + self.hidden
    }

    pub fn b_out_index(&self) -> usize {
        self.data.len() - 1
    }

    pub fn w(&self, g: usize) -> &[f64] {
        &self.data[self.w_range(g)]
    }
    pub fn u(&self, g: usize) -> &[f64] {
        &self.data[self.u_range(g)]
    }
    pub fn b(&self, g: usize) -> &[f64] {
        &self.data[self.b_range(g)]
    }
    pub fn v(&self) -> &[f64] {
        &self.data[self.v_range()]
    }
    pub fn b_out(&self) -> f64 {
        self.data[self.b_out_index()]
    }

    pub fn set(&mut self, range: std::ops::Range<usize>, values: &[f64]) {
        self.data[range].copy_from_slice(values);
    }

    /// Glorot-uniform weights, zero biases except the forget gate at 1.0.
    pub fn init(hidden: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(hidden);
        let glorot = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        for g in 0..4 {
            let lim = glorot(1, hidden);
            for k in p.w_range(g) {
                p.data[k] = rng.random_range(-lim..lim);
            }
            let lim = glorot(hidden, hidden);
            for k in p.u_range(g) {
                p.data[k] = rng.random_range(-lim..lim);
            }
        }
        for k in p.b_range(F) {
            p.data[k] = 1.0;
        }
        let lim = glorot(hidden, 1);
        for k in p.v_range() {
            p.data[k] = rng.random_range(-lim..lim);
        }
        p
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise nonlinearity used in the candidate and cell-output slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative at the pre-activation `x`.
    #[inline]
    pub(crate) fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
        }
    }
}

impl From<CellActivation> for Activation {
    fn from(a: CellActivation) -> Self {
        match a {
            CellActivation::Tanh => Activation::Tanh,
            CellActivation::Relu => Activation::Relu,
        }
    }
}

impl LstmConfig {
    /// Candidate transform, applied to the recurrent affine map.
    pub fn candidate_activation(&self) -> Activation {
        match self.recurrent_activation {
            RecurrentActivation::Cell => self.cell_activation.into(),
            RecurrentActivation::Tanh => Activation::Tanh,
            RecurrentActivation::Sigmoid => Activation::Sigmoid,
        }
    }

    /// Transform of the memory cell feeding the output gate and, from there,
    /// the output layer.
    pub fn cell_output_activation(&self) -> Activation {
        self.cell_activation.into()
    }
}

/// Intermediate values of one step, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub x: f64,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub o: Vec<f64>,
    pub z_c: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
    pub y: f64,
}

pub(crate) fn step_cached(
    params: &Params,
    candidate: Activation,
    output: Activation,
    x: f64,
    h_prev: &[f64],
    c_prev: &[f64],
) -> StepCache {
    let n = params.hidden;
    let mut z = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for (g, zg) in z.iter_mut().enumerate() {
        let w = params.w(g);
        let u = params.u(g);
        let b = params.b(g);
        for r in 0..n {
            let row = &u[r * n..(r + 1) * n];
            let rec_sum: f64 = row.iter().zip(h_prev).map(|(a, h)| a * h).sum();
            zg[r] = w[r] * x + rec_sum + b[r];
        }
    }
    let f: Vec<f64> = z[F].iter().map(|&v| sigmoid(v)).collect();
    let i: Vec<f64> = z[I].iter().map(|&v| sigmoid(v)).collect();
    let o: Vec<f64> = z[O].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[C].iter().map(|&v| candidate.apply(v)).collect();
    let c: Vec<f64> = (0..n).map(|r| f[r] * c_prev[r] + i[r] * g[r]).collect();
    let h: Vec<f64> = (0..n).map(|r| o[r] * output.apply(c[r])).collect();
    let y = params.v().iter().zip(&h).map(|(v, h)| v * h).sum::<f64>() + params.b_out();
    let [_, _, _, z_c] = z;
    StepCache { x, h_prev: h_prev.to_vec(), c_prev: c_prev.to_vec(), f, i, o, z_c, g, c, h, y }
}

/// A configured network with its fitted input scaler.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub params: Params,
    pub scaler: Scaler,
}

impl LstmModel {
    /// Fresh model with seeded Glorot initialisation.
    pub fn new(config: LstmConfig, scaler: Scaler) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = Params::init(config.hidden_units, &mut rng);
        Ok(Self { config, params, scaler })
    }

    pub fn with_params(config: LstmConfig, params: Params, scaler: Scaler) -> Result<Self> {
        config.validate()?;
        if params.hidden != config.hidden_units || params.data.len() != Params::len_for(config.hidden_units) {
            return Err(Error::Dimension("parameter vector does not match hidden_units".into()));
        }
        if params.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged("parameters".into()));
        }
        Ok(Self { config, params, scaler })
    }

    pub fn hidden_units(&self) -> usize {
        self.config.hidden_units
    }

    pub fn zero_state(&self) -> StateCarry {
        StateCarry::zeros(self.hidden_units())
    }

    /// One step in scaled units.
    pub fn step(&self, x: f64, state: &StateCarry) -> Result<(f64, StateCarry)> {
        let cache = step_cached(
            &self.params,
            self.config.candidate_activation(),
            self.config.cell_output_activation(),
            x,
            &state.h,
            &state.c,
        );
        if !cache.y.is_finite() || cache.c.iter().chain(&cache.h).any(|v| !v.is_finite()) {
            return Err(Error::Diverged("forward step".into()));
        }
        Ok((cache.y, StateCarry { h: cache.h, c: cache.c }))
    }

    /// Runs a scaled input sequence from the zero state. Returns the outputs
    /// and the state after every step.
    pub fn forward_sequence(&self, inputs: &[f64]) -> Result<(Vec<f64>, Vec<StateCarry>)> {
        let mut state = self.zero_state();
        let mut outputs = Vec::with_capacity(inputs.len());
        let mut states = Vec::with_capacity(inputs.len());
        for &x in inputs {
            let (y, s) = self.step(x, &state)?;
            outputs.push(y);
            states.push(s.clone());
            state = s;
        }
        Ok((outputs, states))
    }

    /// One-step-ahead fitted values (κ units) for `series[1..]`, and the state
    /// after consuming `series[..n-1]`.
    pub fn fitted(&self, series: &[f64]) -> Result<(Vec<f64>, StateCarry)> {
        if series.is_empty() {
            return Ok((vec![], self.zero_state()));
        }
        let inputs: Vec<f64> = series[..series.len() - 1].iter().map(|&k| self.scaler.scale(k)).collect();
        let (out, states) = self.forward_sequence(&inputs)?;
        let state = states.last().cloned().unwrap_or_else(|| self.zero_state());
        Ok((out.into_iter().map(|y| self.scaler.unscale(y)).collect(), state))
    }

    /// Recursive multi-step forecast in κ units. `state` is the state after the
    /// training sequence; `last_observed` is the final training value.
    pub fn forecast_recursive(&self, last_observed: f64, state: &StateCarry, horizon: usize) -> Result<Vec<f64>> {
        if horizon == 0 {
            return Err(Error::InvalidArgument("forecast horizon must be at least 1".into()));
        }
        let mut state = state.clone();
        let mut x = self.scaler.scale(last_observed);
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let (y, s) = self.step(x, &state)?;
            out.push(self.scaler.unscale(y));
            state = s;
            x = y;
        }
        Ok(out)
    }

    /// Forecast continuing directly from the end of `series`.
    pub fn forecast_after(&self, series: &[f64], horizon: usize) -> Result<Vec<f64>> {
        let (_, state) = self.fitted(series)?;
        let last = *series.last().ok_or(Error::InsufficientData { required: 1, available: 0 })?;
        self.forecast_recursive(last, &state, horizon)
    }
}
