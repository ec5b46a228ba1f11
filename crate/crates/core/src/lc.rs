//! Poisson log-bilinear Lee-Carter model.
//!
//! Deaths are modelled as `D[x][t] ~ Poisson(E[x][t] · exp(α_x + β_x κ_t))`.
//! The fitter cycles uni-dimensional Newton steps over α, κ and β and applies
//! the identifiability constraints `Σκ = 0`, `Σβ = 1` once at termination.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::data::{LogRateSurface, MortalitySurface};
use crate::error::{Error, Result};

/// Fitted Lee-Carter parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LcParameters {
    pub ages: Vec<u32>,
    pub years: Vec<i32>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl LcParameters {
    #[inline]
    pub fn log_rate(&self, age_idx: usize, year_idx: usize) -> f64 {
        self.alpha[age_idx] + self.beta[age_idx] * self.kappa[year_idx]
    }

    /// Applies `α ← α + β·κ̄`, `κ ← (κ − κ̄)·Σβ`, `β ← β/Σβ`.
    ///
    /// Fitted log-rates are unchanged by the transformation.
    pub fn constrained(&self) -> Result<Self> {
        let kbar = self.kappa.iter().sum::<f64>() / self.kappa.len() as f64;
        let bsum: f64 = self.beta.iter().sum();
        if !(bsum.abs() > 1e-12) || !bsum.is_finite() {
            return Err(Error::DegenerateFit(format!("sum of beta is {bsum}")));
        }
        let alpha = self.alpha.iter().zip(&self.beta).map(|(a, b)| a + b * kbar).collect();
        let kappa: Vec<f64> = self.kappa.iter().map(|k| (k - kbar) * bsum).collect();
        // recentre to remove the rounding residue of the subtraction
        let resid = kappa.iter().sum::<f64>() / kappa.len() as f64;
        let kappa = kappa.into_iter().map(|k| k - resid).collect();
        let beta = self.beta.iter().map(|b| b / bsum).collect();
        Ok(Self { ages: self.ages.clone(), years: self.years.clone(), alpha, beta, kappa })
    }

    pub fn age_index(&self, age: u32) -> Option<usize> {
        self.ages.iter().position(|&a| a == age)
    }

    /// CSV `series,index,value`; the index is the age for alpha/beta and the
    /// calendar year for kappa.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("series,index,value\n");
        for (a, v) in self.ages.iter().zip(&self.alpha) {
            let _ = writeln!(out, "alpha,{a},{v}");
        }
        for (a, v) in self.ages.iter().zip(&self.beta) {
            let _ = writeln!(out, "beta,{a},{v}");
        }
        for (y, v) in self.years.iter().zip(&self.kappa) {
            let _ = writeln!(out, "kappa,{y},{v}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut p = Self { ages: vec![], years: vec![], alpha: vec![], beta: vec![], kappa: vec![] };
        let mut beta_ages = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = |m: &str| Error::Parse { line: idx + 1, msg: m.to_string() };
            if f.len() != 3 {
                return Err(bad("expected 3 fields"));
            }
            let value: f64 = f[2].parse().map_err(|_| bad("bad value"))?;
            match f[0] {
                "alpha" => {
                    p.ages.push(f[1].parse().map_err(|_| bad("bad age"))?);
                    p.alpha.push(value);
                }
                "beta" => {
                    beta_ages.push(f[1].parse::<u32>().map_err(|_| bad("bad age"))?);
                    p.beta.push(value);
                }
                "kappa" => {
                    p.years.push(f[1].parse().map_err(|_| bad("bad year"))?);
                    p.kappa.push(value);
                }
                other => return Err(bad(&format!("unknown series '{other}'"))),
            }
        }
        if beta_ages != p.ages {
            return Err(Error::Dimension("alpha and beta cover different ages".into()));
        }
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LcFitOptions {
    /// Absolute change in total deviance between sweeps that stops the fit.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Accept zero-death cells. Observed data is rejected when it contains
    /// them; bootstrap pseudo-surfaces may legitimately clamp cells at zero.
    pub allow_zero_deaths: bool,
}

impl Default for LcFitOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_sweeps: 10_000, allow_zero_deaths: false }
    }
}

#[derive(Debug, Clone)]
pub struct LcFitReport {
    pub params: LcParameters,
    /// Total Poisson deviance after each sweep.
    pub deviance_trace: Vec<f64>,
    pub deviance_residuals: DMatrix<f64>,
    pub fitted_deaths: DMatrix<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

impl LcFitReport {
    pub fn final_deviance(&self) -> f64 {
        self.deviance_trace.last().copied().unwrap_or(f64::NAN)
    }
}

/// Deviance contribution `2[D ln(D/D̂) − (D − D̂)]` of one cell.
#[inline]
pub fn cell_deviance(d: f64, dhat: f64) -> f64 {
    let dlog = if d > 0.0 { d * (d / dhat).ln() } else { 0.0 };
    2.0 * (dlog - (d - dhat))
}

/// Signed deviance residual of one cell.
#[inline]
pub fn cell_residual(d: f64, dhat: f64) -> f64 {
    if d == dhat {
        return 0.0;
    }
    (d - dhat).signum() * cell_deviance(d, dhat).max(0.0).sqrt()
}

pub fn poisson_deviance(deaths: &DMatrix<f64>, fitted: &DMatrix<f64>) -> f64 {
    deaths.iter().zip(fitted.iter()).map(|(&d, &f)| cell_deviance(d, f)).sum()
}

/// `E[x][t]·exp(α_x + β_x κ_t)` for every cell.
pub fn fitted_deaths(surface: &MortalitySurface, params: &LcParameters) -> Result<DMatrix<f64>> {
    check_dims(surface, params)?;
    let e = surface.exposures();
    Ok(DMatrix::from_fn(surface.n_ages(), surface.n_years(), |i, j| {
        e[(i, j)] * params.log_rate(i, j).exp()
    }))
}

fn check_dims(surface: &MortalitySurface, params: &LcParameters) -> Result<()> {
    if params.alpha.len() != surface.n_ages()
        || params.beta.len() != surface.n_ages()
        || params.kappa.len() != surface.n_years()
    {
        return Err(Error::Dimension(format!(
            "parameters ({} ages, {} years) do not match surface ({} ages, {} years)",
            params.alpha.len(),
            params.kappa.len(),
            surface.n_ages(),
            surface.n_years()
        )));
    }
    Ok(())
}

// Negative log-likelihood kernel Σ(D̂ − D ln D̂) over the given (d, dhat) pairs.
#[inline]
fn nll_term(d: f64, dhat: f64) -> f64 {
    if d > 0.0 {
        dhat - d * dhat.ln()
    } else {
        dhat
    }
}

const MAX_HALVINGS: usize = 40;
const NEWTON_FLOOR: f64 = 1e-12;

struct Fitter<'a> {
    d: &'a DMatrix<f64>,
    e: &'a DMatrix<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    kappa: Vec<f64>,
    dhat: DMatrix<f64>,
    trial: Vec<f64>,
}

impl<'a> Fitter<'a> {
    fn eta(&self, i: usize, j: usize) -> f64 {
        self.alpha[i] + self.beta[i] * self.kappa[j]
    }

    fn refresh(&mut self) {
        let (na, ny) = self.d.shape();
        for j in 0..ny {
            for i in 0..na {
                self.dhat[(i, j)] = self.e[(i, j)] * self.eta(i, j).exp();
            }
        }
    }

    // One safeguarded Newton step on α_x or β_x (one age row).
    // The step is halved until the coordinate's own likelihood kernel does not
    // increase, so every accepted update weakly lowers the total deviance.
    fn update_row(&mut self, i: usize, which: Coord) {
        let ny = self.d.ncols();
        let mut grad = 0.0;
        let mut hess = 0.0;
        let mut old = 0.0;
        for j in 0..ny {
            let (d, f) = (self.d[(i, j)], self.dhat[(i, j)]);
            let w = match which {
                Coord::Alpha => 1.0,
                Coord::Beta => self.kappa[j],
            };
            grad += (d - f) * w;
            hess += f * w * w;
            old += nll_term(d, f);
        }
        if !(hess > NEWTON_FLOOR) {
            return;
        }
        let mut step = grad / hess;
        for _ in 0..MAX_HALVINGS {
            let mut new = 0.0;
            for j in 0..ny {
                let w = match which {
                    Coord::Alpha => 1.0,
                    Coord::Beta => self.kappa[j],
                };
                let f = self.dhat[(i, j)] * (step * w).exp();
                self.trial[j] = f;
                new += nll_term(self.d[(i, j)], f);
            }
            if new <= old && new.is_finite() {
                match which {
                    Coord::Alpha => self.alpha[i] += step,
                    Coord::Beta => self.beta[i] += step,
                }
                for j in 0..ny {
                    self.dhat[(i, j)] = self.trial[j];
                }
                return;
            }
            step *= 0.5;
        }
    }

    fn update_kappa(&mut self, j: usize) {
        let na = self.d.nrows();
        let mut grad = 0.0;
        let mut hess = 0.0;
        let mut old = 0.0;
        for i in 0..na {
            let (d, f, b) = (self.d[(i, j)], self.dhat[(i, j)], self.beta[i]);
            grad += (d - f) * b;
            hess += f * b * b;
            old += nll_term(d, f);
        }
        if !(hess > NEWTON_FLOOR) {
            return;
        }
        let mut step = grad / hess;
        for _ in 0..MAX_HALVINGS {
            let mut new = 0.0;
            for i in 0..na {
                let f = self.dhat[(i, j)] * (step * self.beta[i]).exp();
                self.trial[i] = f;
                new += nll_term(self.d[(i, j)], f);
            }
            if new <= old && new.is_finite() {
                self.kappa[j] += step;
                for i in 0..na {
                    self.dhat[(i, j)] = self.trial[i];
                }
                return;
            }
            step *= 0.5;
        }
    }

    fn sweep(&mut self) {
        let (na, ny) = self.d.shape();
        for i in 0..na {
            self.update_row(i, Coord::Alpha);
        }
        for j in 0..ny {
            self.update_kappa(j);
        }
        for i in 0..na {
            self.update_row(i, Coord::Beta);
        }
    }

    fn deviance(&self) -> f64 {
        poisson_deviance(self.d, &self.dhat)
    }
}

#[derive(Clone, Copy)]
enum Coord {
    Alpha,
    Beta,
}

/// Fits the Poisson Lee-Carter model by alternating Newton sweeps.
///
/// Non-convergence within `max_sweeps` is reported through
/// [`LcFitReport::converged`], not as an error.
pub fn fit_lc(surface: &MortalitySurface, opts: &LcFitOptions) -> Result<LcFitReport> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let d = surface.deaths();
    let e = surface.exposures();
    let (na, ny) = d.shape();
    if !opts.allow_zero_deaths {
        for i in 0..na {
            for j in 0..ny {
                if d[(i, j)] <= 0.0 {
                    return Err(Error::ZeroDeaths { age: surface.ages()[i], year: surface.years()[j] });
                }
            }
        }
    }

    let alpha: Vec<f64> = (0..na)
        .map(|i| {
            let logs: Vec<f64> = (0..ny)
                .filter(|&j| d[(i, j)] > 0.0)
                .map(|j| (d[(i, j)] / e[(i, j)]).ln())
                .collect();
            if logs.len() == ny {
                logs.iter().sum::<f64>() / ny as f64
            } else {
                let dsum: f64 = d.row(i).sum();
                (dsum.max(0.5) / e.row(i).sum()).ln()
            }
        })
        .collect();

    let mut fitter = Fitter {
        d,
        e,
        alpha,
        beta: vec![1.0 / na as f64; na],
        kappa: vec![0.0; ny],
        dhat: DMatrix::zeros(na, ny),
        trial: vec![0.0; na.max(ny)],
    };
    fitter.refresh();

    let mut prev = fitter.deviance();
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_sweeps {
        let snapshot = (fitter.alpha.clone(), fitter.beta.clone(), fitter.kappa.clone(), fitter.dhat.clone());
        fitter.sweep();
        let dev = fitter.deviance();
        if dev > prev {
            // only reachable through rounding once the optimum is reached
            (fitter.alpha, fitter.beta, fitter.kappa, fitter.dhat) = snapshot;
            converged = true;
            break;
        }
        trace.push(dev);
        if prev - dev < opts.tol {
            converged = true;
            break;
        }
        prev = dev;
    }
    if trace.is_empty() {
        trace.push(prev);
    }

    let raw = LcParameters {
        ages: surface.ages().to_vec(),
        years: surface.years().to_vec(),
        alpha: fitter.alpha,
        beta: fitter.beta,
        kappa: fitter.kappa,
    };
    let params = raw.constrained()?;
    let fitted = fitted_deaths(surface, &params)?;
    let residuals = residual_matrix(d, &fitted);
    Ok(LcFitReport {
        params,
        sweeps: trace.len(),
        deviance_trace: trace,
        deviance_residuals: residuals,
        fitted_deaths: fitted,
        converged,
    })
}

fn residual_matrix(d: &DMatrix<f64>, fitted: &DMatrix<f64>) -> DMatrix<f64> {
    d.zip_map(fitted, cell_residual)
}

/// Deviance residuals `sign(D − D̂)·sqrt(2[D ln(D/D̂) − (D − D̂)])`.
pub fn deviance_residuals(surface: &MortalitySurface, params: &LcParameters) -> Result<DMatrix<f64>> {
    let fitted = fitted_deaths(surface, params)?;
    Ok(residual_matrix(surface.deaths(), &fitted))
}

/// Inverts the deviance-residual map for one cell: the `D* ≥ 0` with
/// `cell_residual(D*, dhat) = r`, clamped at zero when `r` is below the
/// residual of a zero count.
pub fn invert_residual(r: f64, dhat: f64) -> Option<f64> {
    if !r.is_finite() || !(dhat > 0.0) {
        return None;
    }
    if r == 0.0 {
        return Some(dhat);
    }
    let target = 0.5 * r * r;
    // h(D) = D ln(D/D̂) − (D − D̂) is convex, zero at D̂ and increasing away from it
    let h = |x: f64| if x > 0.0 { x * (x / dhat).ln() - (x - dhat) } else { dhat };
    let (mut lo, mut hi) = if r < 0.0 {
        if target >= dhat {
            return Some(0.0);
        }
        (0.0, dhat)
    } else {
        let mut hi = 2.0 * dhat;
        let mut n = 0;
        while h(hi) < target {
            hi *= 2.0;
            n += 1;
            if n > 1100 || !hi.is_finite() {
                return None;
            }
        }
        (dhat, hi)
    };
    // bisection on the monotone branch, to the last representable bit
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let inside = if r > 0.0 { h(mid) < target } else { h(mid) > target };
        if inside {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let pick = |x: f64| (h(x) - target).abs();
    Some(if pick(lo) <= pick(hi) { lo } else { hi })
}

/// Pseudo-surface whose deviance residuals against `params` equal `r_star`.
pub fn reconstruct_surface_from_residuals(
    surface: &MortalitySurface,
    params: &LcParameters,
    r_star: &DMatrix<f64>,
) -> Result<MortalitySurface> {
    if r_star.shape() != surface.deaths().shape() {
        return Err(Error::Dimension(format!(
            "residual matrix {:?} does not match surface {:?}",
            r_star.shape(),
            surface.deaths().shape()
        )));
    }
    let fitted = fitted_deaths(surface, params)?;
    let mut pseudo = DMatrix::zeros(surface.n_ages(), surface.n_years());
    for i in 0..surface.n_ages() {
        for j in 0..surface.n_years() {
            let r = r_star[(i, j)];
            pseudo[(i, j)] = invert_residual(r, fitted[(i, j)]).ok_or(Error::Bracket {
                age: surface.ages()[i],
                year: surface.years()[j],
                residual: r,
            })?;
        }
    }
    surface.with_deaths(pseudo)
}

/// `log m̂[x][h] = α̂_x + β̂_x·κ[h]` for forecast years starting at `first_year`.
pub fn lc_point_forecast(params: &LcParameters, kappa_future: &[f64], first_year: i32) -> LogRateSurface {
    let na = params.ages.len();
    let nh = kappa_future.len();
    LogRateSurface {
        ages: params.ages.clone(),
        years: (0..nh as i32).map(|h| first_year + h).collect(),
        logm: DMatrix::from_fn(na, nh, |i, h| params.alpha[i] + params.beta[i] * kappa_future[h]),
        zero_deaths: DMatrix::from_element(na, nh, false),
    }
}

/// Per-year Poisson maximum-likelihood κ_t with α and β held fixed.
///
/// Used to express held-out years on the scale of a fit made on the training
/// window only.
pub fn kappa_given_age_profile(surface: &MortalitySurface, alpha: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    if alpha.len() != surface.n_ages() || beta.len() != surface.n_ages() {
        return Err(Error::Dimension("age parameters do not match surface".into()));
    }
    let d = surface.deaths();
    let e = surface.exposures();
    let na = surface.n_ages();
    let mut out = Vec::with_capacity(surface.n_years());
    let mut k = 0.0;
    for j in 0..surface.n_years() {
        let nll = |k: f64| -> f64 {
            (0..na).map(|i| nll_term(d[(i, j)], e[(i, j)] * (alpha[i] + beta[i] * k).exp())).sum()
        };
        for _ in 0..200 {
            let mut grad = 0.0;
            let mut hess = 0.0;
            for i in 0..na {
                let f = e[(i, j)] * (alpha[i] + beta[i] * k).exp();
                grad += (d[(i, j)] - f) * beta[i];
                hess += f * beta[i] * beta[i];
            }
            if !(hess > NEWTON_FLOOR) {
                break;
            }
            let old = nll(k);
            let mut step = grad / hess;
            let mut moved = false;
            for _ in 0..MAX_HALVINGS {
                if nll(k + step) <= old {
                    k += step;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved || step.abs() < 1e-13 * (1.0 + k.abs()) {
                break;
            }
        }
        out.push(k);
    }
    Ok(out)
}
