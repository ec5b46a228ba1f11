//! Fixtures shared by the benchmarks in `benches/`.

use lclstm::ensemble::EnsembleDistribution;
use lclstm::simulate::{simulate, SimulationSpec};
use lclstm::MortalitySurface;

/// A Poisson surface shaped like a national table: ages 0-100, 69 years.
pub fn national_surface() -> MortalitySurface {
    simulate(&SimulationSpec { age_max: 100, seed: 1, ..Default::default() }).expect("valid spec").surface
}

/// A noisy drifting κ series of length `n`.
pub fn kappa_series(n: usize) -> Vec<f64> {
    simulate(&SimulationSpec { age_min: 60, age_max: 61, n_years: n, seed: 2, ..Default::default() })
        .expect("valid spec")
        .truth
        .kappa
}

/// `members` deterministic forecast paths over `horizon` steps.
pub fn ensemble(members: usize, horizon: usize) -> EnsembleDistribution {
    let paths = (0..members)
        .map(|b| (0..horizon).map(|h| -1.8 * (h + 1) as f64 + ((b * 7 + h * 3) % 11) as f64 * 0.1).collect())
        .collect();
    EnsembleDistribution {
        paths,
        member_seeds: (0..members as u64).collect(),
        horizon_years: (2001..2001 + horizon as i32).collect(),
    }
}
