//! Full-sequence backpropagation through time and the training loop.

use super::{step_cached, LstmConfig, LstmModel, Optimizer, Params, Scaler, StateCarry, StepCache, C, F, I, O};
use super::Activation;
use crate::error::{Error, Result};

/// Mean squared one-step error over `inputs`/`targets` (scaled units) from the
/// zero state, with its gradient. Also returns the final state.
pub fn loss_and_gradient(
    params: &Params,
    candidate: Activation,
    output: Activation,
    inputs: &[f64],
    targets: &[f64],
) -> (f64, Params, StateCarry) {
    assert_eq!(inputs.len(), targets.len());
    let n = params.hidden;
    let steps = inputs.len();
    let mut caches: Vec<StepCache> = Vec::with_capacity(steps);
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut loss = 0.0;
    for (&x, &t) in inputs.iter().zip(targets) {
        let cache = step_cached(params, candidate, output, x, &h, &c);
        let e = cache.y - t;
        loss += e * e;
        h.clone_from(&cache.h);
        c.clone_from(&cache.c);
        caches.push(cache);
    }
    let scale = if steps > 0 { 1.0 / steps as f64 } else { 0.0 };
    loss *= scale;

    let mut grad = Params::zeros(n);
    let mut dh_next = vec![0.0; n];
    let mut dc_next = vec![0.0; n];
    let mut dz = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let v_range = params.v_range();
    let b_out = params.b_out_index();
    let v = params.v().to_vec();
    let u: Vec<Vec<f64>> = (0..4).map(|g| params.u(g).to_vec()).collect();
    let (w_r, u_r, b_r): (Vec<_>, Vec<_>, Vec<_>) =
        (0..4).map(|g| (params.w_range(g), params.u_range(g), params.b_range(g))).fold(
            (vec![], vec![], vec![]),
            |(mut a, mut b, mut c), (x, y, z)| {
                a.push(x);
                b.push(y);
                c.push(z);
                (a, b, c)
            },
        );

    for (t, cache) in caches.iter().enumerate().rev() {
        let dy = 2.0 * (cache.y - targets[t]) * scale;
        grad.data[b_out] += dy;
        for r in 0..n {
            grad.data[v_range.start + r] += dy * cache.h[r];
        }
        for r in 0..n {
            let dh = v[r] * dy + dh_next[r];
            let act_c = output.apply(cache.c[r]);
            let d_o = dh * act_c;
            let dc = dh * cache.o[r] * output.derivative(cache.c[r]) + dc_next[r];
            dz[O][r] = d_o * cache.o[r] * (1.0 - cache.o[r]);
            dz[F][r] = dc * cache.c_prev[r] * cache.f[r] * (1.0 - cache.f[r]);
            dz[I][r] = dc * cache.g[r] * cache.i[r] * (1.0 - cache.i[r]);
            dz[C][r] = dc * cache.i[r] * candidate.derivative(cache.z_c[r]);
            dc_next[r] = dc * cache.f[r];
        }
        dh_next.iter_mut().for_each(|d| *d = 0.0);
        for g in 0..4 {
            let (ws, us, bs) = (w_r[g].start, u_r[g].start, b_r[g].start);
            for r in 0..n {
                let d = dz[g][r];
                grad.data[ws + r] += d * cache.x;
                grad.data[bs + r] += d;
                let row = &mut grad.data[us + r * n..us + (r + 1) * n];
                for (gk, hp) in row.iter_mut().zip(&cache.h_prev) {
                    *gk += d * hp;
                }
                let urow = &u[g][r * n..(r + 1) * n];
                for (dn, uk) in dh_next.iter_mut().zip(urow) {
                    *dn += d * uk;
                }
            }
        }
    }
    (loss, grad, StateCarry { h, c })
}

/// Mean squared error of one-step predictions continuing from `state`.
fn continuation_loss(model: &LstmModel, state: &StateCarry, inputs: &[f64], targets: &[f64]) -> Result<f64> {
    let mut s = state.clone();
    let mut acc = 0.0;
    for (&x, &t) in inputs.iter().zip(targets) {
        let (y, next) = model.step(x, &s)?;
        acc += (y - t) * (y - t);
        s = next;
    }
    Ok(acc / inputs.len().max(1) as f64)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LstmModel,
    /// Training MSE (scaled units) before each update; entry `e` is after `e` updates.
    pub loss_trace: Vec<f64>,
    /// Validation MSE in κ units, aligned with `loss_trace` when validation is used.
    pub validation_trace: Vec<f64>,
    /// Number of updates applied to the returned weights.
    pub best_epoch: usize,
    /// Best validation MSE in κ units.
    pub best_validation: Option<f64>,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * grad[k];
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * grad[k] * grad[k];
            params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Trains a fresh model on `series` (κ units) with lag-1 pairs.
///
/// When `validation` is given it holds the values immediately following
/// `series`; the validation loss is computed by continuing the carried state,
/// training stops after `patience` epochs without improvement and the best
/// weights are restored. Without validation, exactly `max_epochs` updates run.
pub fn train(config: &LstmConfig, series: &[f64], validation: Option<&[f64]>) -> Result<TrainOutcome> {
    config.validate()?;
    if series.len() < 3 {
        return Err(Error::InsufficientData { required: 3, available: series.len() });
    }
    if series.iter().chain(validation.unwrap_or(&[])).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("training series contains non-finite values".into()));
    }
    let scaler = Scaler::fit(series);
    let mut model = LstmModel::new(config.clone(), scaler)?;
    let scaled: Vec<f64> = series.iter().map(|&k| scaler.scale(k)).collect();
    let inputs = &scaled[..scaled.len() - 1];
    let targets = &scaled[1..];
    let (val_inputs, val_targets) = match validation {
        Some(v) if !v.is_empty() => {
            let vs: Vec<f64> = v.iter().map(|&k| scaler.scale(k)).collect();
            let mut vi = vec![*scaled.last().unwrap()];
            vi.extend_from_slice(&vs[..vs.len() - 1]);
            (vi, vs)
        }
        _ => (vec![], vec![]),
    };
    let use_val = !val_targets.is_empty();
    let var_factor = scaler.variance_factor();

    let mut adam = Adam::new(model.params.data.len());
    let mut loss_trace = Vec::new();
    let mut validation_trace = Vec::new();
    let mut best: Option<(f64, usize, Params)> = None;
    let mut since_best = 0usize;

    for epoch in 0..=config.max_epochs {
        let (loss, mut grad, state) =
            loss_and_gradient(&model.params, config.candidate_activation(), config.cell_output_activation(), inputs, targets);
        if !loss.is_finite() || grad.data.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged("training loss".into()));
        }
        loss_trace.push(loss);
        if use_val {
            let vl = continuation_loss(&model, &state, &val_inputs, &val_targets)? * var_factor;
            validation_trace.push(vl);
            match &best {
                Some((b, _, _)) if vl >= *b => since_best += 1,
                _ => {
                    best = Some((vl, epoch, model.params.clone()));
                    since_best = 0;
                }
            }
            if since_best >= config.patience {
                break;
            }
        }
        if epoch == config.max_epochs {
            break;
        }
        let norm = grad.data.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > config.clip_norm {
            let s = config.clip_norm / norm;
            grad.data.iter_mut().for_each(|g| *g *= s);
        }
        match config.optimizer {
            Optimizer::Sgd => {
                for (p, g) in model.params.data.iter_mut().zip(&grad.data) {
                    *p -= config.learning_rate * g;
                }
            }
            Optimizer::Adam => adam.update(&mut model.params.data, &grad.data, config.learning_rate),
        }
        if model.params.data.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged("weights".into()));
        }
    }

    let (best_epoch, best_validation) = match best {
        Some((vl, e, p)) => {
            model.params = p;
            (e, Some(vl))
        }
        None => (loss_trace.len() - 1, None),
    };
    Ok(TrainOutcome { model, loss_trace, validation_trace, best_epoch, best_validation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_check(cell: Activation, rec: Activation) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = Params::init(3, &mut rng);
        for p in params.data.iter_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let inputs = [0.3, -0.5, 0.8, 0.1, -0.2];
        let targets = [-0.5, 0.8, 0.1, -0.2, 0.4];
        let (_, grad, _) = loss_and_gradient(&params, cell, rec, &inputs, &targets);
        let eps = 1e-6;
        let mut worst: f64 = 0.0;
        for k in 0..params.data.len() {
            let mut plus = params.clone();
            plus.data[k] += eps;
            let mut minus = params.clone();
            minus.data[k] -= eps;
            let lp = loss_and_gradient(&plus, cell, rec, &inputs, &targets).0;
            let lm = loss_and_gradient(&minus, cell, rec, &inputs, &targets).0;
            let fd = (lp - lm) / (2.0 * eps);
            let an = grad.data[k];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-7);
            worst = worst.max(rel);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for cell in [Activation::Tanh, Activation::Relu] {
            for rec in [Activation::Tanh, Activation::Relu, Activation::Sigmoid] {
                let err = fd_check(cell, rec);
                assert!(err < 1e-5, "{cell:?}/{rec:?}: {err}");
            }
        }
    }

    #[test]
    fn linear_series_loss_decreases() {
        let series: Vec<f64> = (0..40).map(|t| 50.0 - t as f64).collect();
        let out = train(&LstmConfig { max_epochs: 10, patience: 10, ..Default::default() }, &series, None).unwrap();
        assert_eq!(out.loss_trace.len(), 11);
        for w in out.loss_trace.windows(2) {
            assert!(w[1] < w[0], "{:?}", out.loss_trace);
        }
    }

    #[test]
    fn constant_series_is_reproduced() {
        let series = vec![-12.5; 30];
        let cfg = LstmConfig { max_epochs: 300, patience: 50, ..Default::default() };
        let out = train(&cfg, &series, None).unwrap();
        let (fitted, _) = out.model.fitted(&series).unwrap();
        assert!(fitted.iter().all(|f| (f + 12.5).abs() < 1e-3), "{fitted:?}");
        let fc = out.model.forecast_after(&series, 5).unwrap();
        assert!(fc.iter().all(|f| (f + 12.5).abs() < 1e-3), "{fc:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let series: Vec<f64> = (0..25).map(|t| (t as f64 * 0.4).sin() * 10.0 - t as f64).collect();
        let cfg = LstmConfig { hidden_units: 4, max_epochs: 50, patience: 10, seed: 9, ..Default::default() };
        let a = train(&cfg, &series, Some(&[-25.0, -27.0])).unwrap();
        let b = train(&cfg, &series, Some(&[-25.0, -27.0])).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn rejects_short_or_bad_input() {
        let cfg = LstmConfig::default();
        assert!(matches!(train(&cfg, &[1.0, 2.0], None), Err(Error::InsufficientData { .. })));
        assert!(train(&cfg, &[1.0, f64::NAN, 2.0], None).is_err());
    }

    #[test]
    fn huge_learning_rate_reports_divergence_or_finite_weights() {
        let series: Vec<f64> = (0..20).map(|t| t as f64).collect();
        let cfg = LstmConfig { learning_rate: 1e300, max_epochs: 5, patience: 5, ..Default::default() };
        match train(&cfg, &series, None) {
            Err(Error::Diverged(_)) => {}
            Ok(out) => assert!(out.model.params.data.iter().all(|p| p.is_finite())),
            Err(e) => panic!("unexpected {e}"),
        }
    }
}
