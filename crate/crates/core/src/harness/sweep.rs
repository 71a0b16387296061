//! Batch episode execution and the steady-state-error study.
//!
//! Independent episodes share no mutable state, so batches fan out over a
//! rayon pool when the `parallel` feature is on; results always come back in
//! input order, keeping every downstream artifact deterministic.

use super::config::Config;
use super::episode::{run_episode_with_duration, EpisodeResult};
use crate::error::Result;

/// Run one episode per estimate at the configured episode duration.
pub fn run_episode_batch(estimates: &[Vec<f64>], cfg: &Config) -> Result<Vec<EpisodeResult>> {
    run_batch_with_duration(estimates, cfg, cfg.episode_duration())
}

/// As [`run_episode_batch`] with an explicit duration.
pub fn run_batch_with_duration(
    estimates: &[Vec<f64>],
    cfg: &Config,
    duration: f64,
) -> Result<Vec<EpisodeResult>> {
    let eval = |estimate: &Vec<f64>| run_episode_with_duration(estimate, cfg, duration);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        estimates.par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        estimates.iter().map(eval).collect()
    }
}

/// Episode costs only, without trajectory storage (grid-sized sweeps would
/// otherwise hold gigabytes of samples).
pub fn episode_costs(estimates: &[Vec<f64>], cfg: &Config) -> Result<Vec<f64>> {
    let eval = |estimate: &Vec<f64>| super::episode::episode_cost(estimate, cfg);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        estimates.par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        estimates.iter().map(eval).collect()
    }
}

/// One row of the steady-state study.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub error_norm: f64,
    /// Mean tracking-error norm over the trailing window.
    pub steady_state_error: f64,
    pub peak_error: f64,
}

/// Hold the estimate at a fixed offset from the truth and measure the
/// steady-state tracking error, once per configured error norm.
///
/// The offset direction is the (normalized) learned part of the true
/// uncertainty, so the studied errors scale a single physically meaningful
/// direction; with a zero true uncertainty the first learned axis is used.
pub fn sweep(cfg: &Config) -> Result<Vec<SweepPoint>> {
    let layout = cfg.layout()?;
    let truth = layout.extract(cfg.true_uncertainty()?.matrix())?;
    let norm = truth.iter().map(|v| v * v).sum::<f64>().sqrt();
    let direction: Vec<f64> = if norm > 0.0 {
        truth.iter().map(|v| v / norm).collect()
    } else {
        let mut d = vec![0.0; truth.len()];
        d[0] = 1.0;
        d
    };

    let estimates: Vec<Vec<f64>> = cfg
        .sweep
        .norms
        .iter()
        .map(|&n| {
            truth
                .iter()
                .zip(&direction)
                .map(|(&t, &d)| t - n * d)
                .collect()
        })
        .collect();
    let episodes = run_batch_with_duration(&estimates, cfg, cfg.sweep.duration)?;
    Ok(cfg
        .sweep
        .norms
        .iter()
        .zip(&episodes)
        .map(|(&n, ep)| SweepPoint {
            error_norm: n,
            steady_state_error: ep.steady_state_error(cfg.sweep.window),
            peak_error: ep.max_error_norm(),
        })
        .collect())
}
