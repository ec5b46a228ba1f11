//! Residual bootstrap of the mortality surface and the bagged LSTM ensemble.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::MortalitySurface;
use crate::error::{Error, Result};
use crate::lc::{fit_lc, reconstruct_surface_from_residuals, LcFitOptions, LcFitReport};
use crate::lstm::{train, LstmConfig};
use crate::stats::{compensated_sum, mix_seed};

/// Salt separating the bootstrap and training seed streams.
const TRAIN_STREAM: u64 = 0x7472_6169_6e00_0000;

/// One bootstrap κ series per member, from resampled deviance residuals.
///
/// Residuals are drawn i.i.d. with replacement over all cells; the pseudo
/// surface is refitted from scratch.
pub fn bootstrap_kappas(
    surface: &MortalitySurface,
    fit: &LcFitReport,
    members: usize,
    seed: u64,
    opts: &LcFitOptions,
) -> Result<Vec<Vec<f64>>> {
    if members < 2 {
        return Err(Error::InvalidArgument("at least two bootstrap members are required".into()));
    }
    if !fit.converged {
        return Err(Error::DegenerateFit("bootstrap requires a converged Lee-Carter fit".into()));
    }
    let residuals = &fit.deviance_residuals;
    let (na, ny) = residuals.shape();
    let cells = na * ny;
    let refit = LcFitOptions { allow_zero_deaths: true, ..*opts };
    (0..members)
        .into_par_iter()
        .map(|b| {
            let member = || -> Result<Vec<f64>> {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, b as u64));
                let r_star = DMatrix::from_fn(na, ny, |_, _| {
                    let k = rng.random_range(0..cells);
                    residuals[(k % na, k / na)]
                });
                let pseudo = reconstruct_surface_from_residuals(surface, &fit.params, &r_star)?;
                Ok(fit_lc(&pseudo, &refit)?.params.kappa)
            };
            member().map_err(|e| Error::Member { member: b, source: Box::new(e) })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDistribution {
    /// `paths[b][h]`: member `b`'s forecast at horizon step `h + 1`.
    pub paths: Vec<Vec<f64>>,
    pub member_seeds: Vec<u64>,
    pub horizon_years: Vec<i32>,
}

impl EnsembleDistribution {
    pub fn members(&self) -> usize {
        self.paths.len()
    }

    pub fn horizon(&self) -> usize {
        self.horizon_years.len()
    }

    /// `member,year,kappa_hat`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("member,year,kappa_hat\n");
        for (b, path) in self.paths.iter().enumerate() {
            for (year, k) in self.horizon_years.iter().zip(path) {
                let _ = writeln!(out, "{b},{year},{k}");
            }
        }
        out
    }
}

/// Seed used for member `b`'s network initialisation.
pub fn member_seed(master: u64, b: usize) -> u64 {
    mix_seed(master ^ TRAIN_STREAM, b as u64)
}

/// Retrains the frozen architecture on every bootstrap κ series and forecasts
/// `horizon_years.len()` steps ahead. A diverging member is retried once with
/// half the learning rate.
pub fn train_and_forecast_members(
    tuned: &LstmConfig,
    samples: &[Vec<f64>],
    horizon_years: &[i32],
    master_seed: u64,
) -> Result<EnsembleDistribution> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("at least two ensemble members are required".into()));
    }
    let horizon = horizon_years.len();
    let results: Vec<Result<(Vec<f64>, u64)>> = samples
        .par_iter()
        .enumerate()
        .map(|(b, series)| {
            let seed = member_seed(master_seed, b);
            let cfg = LstmConfig { seed, ..tuned.clone() };
            let run = |cfg: &LstmConfig| -> Result<Vec<f64>> {
                let out = train(cfg, series, None)?;
                out.model.forecast_after(series, horizon)
            };
            let path = match run(&cfg) {
                Err(Error::Diverged(_)) => {
                    run(&LstmConfig { learning_rate: cfg.learning_rate / 2.0, ..cfg.clone() })
                }
                other => other,
            };
            path.map(|p| (p, seed)).map_err(|e| Error::Member { member: b, source: Box::new(e) })
        })
        .collect();
    let mut paths = Vec::with_capacity(samples.len());
    let mut member_seeds = Vec::with_capacity(samples.len());
    for r in results {
        let (p, s) = r?;
        paths.push(p);
        member_seeds.push(s);
    }
    Ok(EnsembleDistribution { paths, member_seeds, horizon_years: horizon_years.to_vec() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaggedEstimate {
    pub years: Vec<i32>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl BaggedEstimate {
    /// `year,mean,variance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("year,mean,variance\n");
        for k in 0..self.years.len() {
            let _ = writeln!(out, "{},{},{}", self.years[k], self.mean[k], self.variance[k]);
        }
        out
    }
}

/// Column values in a canonical order so that sums do not depend on member order.
fn sorted_column(dist: &EnsembleDistribution, h: usize) -> Vec<f64> {
    let mut col: Vec<f64> = dist.paths.iter().map(|p| p[h]).collect();
    col.sort_by(f64::total_cmp);
    col
}

/// Cross-member mean and sample variance (divisor `B − 1`) per horizon step.
pub fn bag(dist: &EnsembleDistribution) -> Result<BaggedEstimate> {
    let b = dist.members();
    if b < 2 {
        return Err(Error::InvalidArgument("bagging needs at least two members".into()));
    }
    if dist.paths.iter().any(|p| p.len() != dist.horizon()) {
        return Err(Error::Dimension("ensemble paths differ in length".into()));
    }
    let (mut mean, mut variance) = (Vec::new(), Vec::new());
    for h in 0..dist.horizon() {
        let col = sorted_column(dist, h);
        let m = compensated_sum(col.iter().copied()) / b as f64;
        let mut sq: Vec<f64> = col.iter().map(|v| (v - m) * (v - m)).collect();
        sq.sort_by(f64::total_cmp);
        let v = compensated_sum(sq) / (b - 1) as f64;
        mean.push(m);
        variance.push(if col.first() == col.last() { 0.0 } else { v });
    }
    Ok(BaggedEstimate { years: dist.horizon_years.clone(), mean, variance })
}

/// Sum of unsquared deviations over `B − 1`, for inspection only; it is zero
/// up to rounding.
pub fn bag_literal(dist: &EnsembleDistribution) -> Result<Vec<f64>> {
    let bagged = bag(dist)?;
    let b = dist.members();
    Ok((0..dist.horizon())
        .map(|h| {
            let dev: Vec<f64> = sorted_column(dist, h).into_iter().map(|v| v - bagged.mean[h]).collect();
            compensated_sum(dev) / (b - 1) as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn dist(paths: Vec<Vec<f64>>) -> EnsembleDistribution {
        let s = paths[0].len();
        let b = paths.len();
        EnsembleDistribution { paths, member_seeds: (0..b as u64).collect(), horizon_years: (2001..2001 + s as i32).collect() }
    }

    #[test]
    fn bag_examples() {
        let e = bag(&dist(vec![vec![1.0, 2.0], vec![3.0, 4.0]])).unwrap();
        assert_eq!(e.mean, vec![2.0, 3.0]);
        assert_eq!(e.variance, vec![2.0, 2.0]);
        let e = bag(&dist(vec![vec![0.1, -7.3]; 5])).unwrap();
        assert_eq!(e.variance, vec![0.0, 0.0]);
        assert!(bag(&dist(vec![vec![1.0]])).is_err());
    }

    #[test]
    fn standard_normal_columns_have_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let paths: Vec<Vec<f64>> =
            (0..1000).map(|_| (0..200).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
        let e = bag(&dist(paths)).unwrap();
        // Each column lands in the band with probability ≈ 0.975.
        let inside = e.variance.iter().filter(|v| (0.9..=1.1).contains(*v)).count();
        assert!(inside >= 190, "{inside} of 200 columns inside [0.9, 1.1]");
    }

    #[test]
    fn literal_variant_is_near_zero() {
        let lit = bag_literal(&dist(vec![vec![1.0, 5.0], vec![3.0, -4.0], vec![8.0, 0.5]])).unwrap();
        assert!(lit.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn csv_layout() {
        let d = dist(vec![vec![1.5, 2.5], vec![3.0, 4.0]]);
        assert_eq!(d.to_csv(), "member,year,kappa_hat\n0,2001,1.5\n0,2002,2.5\n1,2001,3\n1,2002,4\n");
        assert_eq!(bag(&d).unwrap().to_csv().lines().count(), 3);
    }

    #[test]
    fn constant_members_agree() {
        let samples = vec![vec![-4.0; 20]; 3];
        let cfg = LstmConfig { hidden_units: 3, max_epochs: 300, patience: 10, ..Default::default() };
        let d = train_and_forecast_members(&cfg, &samples, &[2001, 2002, 2003], 5).unwrap();
        let e = bag(&d).unwrap();
        assert!(e.variance.iter().all(|v| v.sqrt() < 0.1), "{:?}", e.variance);
        let again = train_and_forecast_members(&cfg, &samples, &[2001, 2002, 2003], 5).unwrap();
        assert_eq!(d, again);
    }

    proptest! {
        #[test]
        fn bagging_is_order_invariant(rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 4), 2..30), shift in 0usize..30) {
            let a = bag(&dist(rows.clone())).unwrap();
            let mut rotated = rows.clone();
            rotated.rotate_left(shift % rows.len());
            rotated.reverse();
            let b = bag(&dist(rotated)).unwrap();
            prop_assert_eq!(a.mean, b.mean);
            prop_assert_eq!(a.variance.clone(), b.variance);
            prop_assert!(a.variance.iter().all(|v| *v >= 0.0));
        }
    }
}
