//! Hyper-parameter grid search on a sub-training / validation split.

use rayon::prelude::*;

use super::{train, LstmConfig};
use crate::error::{Error, Result};

/// Fraction of the training series used for sub-training.
pub const SUB_TRAINING_FRACTION: f64 = 0.8;

/// Hidden units {5,10,15,20,25} × learning rate {0.01, 0.005}.
pub fn default_grid(base: &LstmConfig) -> Vec<LstmConfig> {
    let mut grid = Vec::new();
    for units in [5, 10, 15, 20, 25] {
        for lr in [0.01, 0.005] {
            grid.push(LstmConfig { hidden_units: units, learning_rate: lr, ..base.clone() });
        }
    }
    grid
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best: LstmConfig,
    pub best_index: usize,
    /// Validation MSE (κ units) per grid entry; `None` where training diverged.
    pub scores: Vec<Option<f64>>,
    /// Early-stopping epoch per grid entry.
    pub epochs: Vec<Option<usize>>,
    pub split: usize,
}

impl GridResult {
    pub fn best_score(&self) -> f64 {
        self.scores[self.best_index].expect("best entry has a score")
    }

    /// The winning configuration with its epoch budget set to the
    /// early-stopping epoch, for refitting on the full training series.
    pub fn tuned(&self) -> LstmConfig {
        let epochs = self.epochs[self.best_index].unwrap_or(self.best.max_epochs).max(1);
        LstmConfig { max_epochs: epochs, patience: self.best.patience.min(epochs), ..self.best.clone() }
    }
}

/// Number of leading points kept for sub-training.
pub fn split_point(len: usize) -> usize {
    let m = (len as f64 * SUB_TRAINING_FRACTION).round() as usize;
    m.clamp(3.min(len), len.saturating_sub(1))
}

/// Trains every config on the leading 80% and scores it on the rest.
/// Ties go to fewer hidden units, then lower learning rate, then grid order.
pub fn grid_search(series: &[f64], grid: &[LstmConfig]) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("grid must contain at least one configuration".into()));
    }
    if series.len() < 4 {
        return Err(Error::InsufficientData { required: 4, available: series.len() });
    }
    for cfg in grid {
        cfg.validate()?;
    }
    let split = split_point(series.len());
    let (sub, val) = series.split_at(split);
    let results: Vec<Option<(f64, usize)>> = grid
        .par_iter()
        .map(|cfg| match train(cfg, sub, Some(val)) {
            Ok(out) => out.best_validation.map(|v| (v, out.best_epoch)),
            Err(_) => None,
        })
        .collect();
    let best_index = results
        .iter()
        .enumerate()
        .filter_map(|(k, r)| r.map(|(score, _)| (k, score)))
        .min_by(|(a, sa), (b, sb)| {
            sa.total_cmp(sb)
                .then(grid[*a].hidden_units.cmp(&grid[*b].hidden_units))
                .then(grid[*a].learning_rate.total_cmp(&grid[*b].learning_rate))
                .then(a.cmp(b))
        })
        .map(|(k, _)| k)
        .ok_or(Error::AllConfigsDiverged)?;
    Ok(GridResult {
        best: grid[best_index].clone(),
        best_index,
        scores: results.iter().map(|r| r.map(|(s, _)| s)).collect(),
        epochs: results.iter().map(|r| r.map(|(_, e)| e)).collect(),
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(units: usize, seed: u64) -> LstmConfig {
        LstmConfig { hidden_units: units, max_epochs: 60, patience: 20, seed, ..Default::default() }
    }

    #[test]
    fn single_config_is_returned() {
        let series: Vec<f64> = (0..20).map(|t| -(t as f64)).collect();
        let r = grid_search(&series, &[quick(3, 1)]).unwrap();
        assert_eq!(r.best_index, 0);
        assert_eq!(r.best, quick(3, 1));
        assert_eq!(r.split, 16);
    }

    #[test]
    fn identical_configs_tie_break_on_grid_order() {
        let series: Vec<f64> = (0..20).map(|t| (t as f64).sqrt()).collect();
        let grid = vec![quick(4, 7), quick(4, 7)];
        let r = grid_search(&series, &grid).unwrap();
        assert_eq!(r.scores[0], r.scores[1]);
        assert_eq!(r.best_index, 0);
    }

    #[test]
    fn winner_has_minimum_validation_error() {
        let series: Vec<f64> = (0..40).map(|t| 50.0 - t as f64).collect();
        let grid = vec![quick(5, 3), quick(10, 3), quick(25, 3)];
        let r = grid_search(&series, &grid).unwrap();
        let best = r.best_score();
        for (k, cfg) in grid.iter().enumerate() {
            let (sub, val) = series.split_at(r.split);
            let again = train(cfg, sub, Some(val)).unwrap().best_validation.unwrap();
            assert_eq!(Some(again), r.scores[k]);
            assert!(best <= again);
        }
    }

    #[test]
    fn empty_grid_is_rejected() {
        assert!(grid_search(&[1.0, 2.0, 3.0, 4.0], &[]).is_err());
    }
}
