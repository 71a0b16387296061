//! Outer learning loops: extremum seeking and GP-UCB over episodes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::Config;
use super::episode::run_episode;
use super::sweep::episode_costs;
use crate::error::{Error, Result};
use crate::gpucb::{acquire, argmin_lowest_index, posterior_means, GpDataset, RegretLog};
use crate::mes::MesState;

/// One outer-loop iteration: the estimate that ran, the cost the learner saw,
/// and (for GP-UCB) the current posterior-best grid point and regret columns.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cost value fed to the learner; failed episodes are substituted per the
    /// estimator's policy and flagged below.
    pub cost: f64,
    pub running_min: f64,
    /// Estimate applied in this iteration's episode (for GP-UCB, the queried
    /// grid point).
    pub estimate: Vec<f64>,
    /// GP-UCB only: the grid point with the lowest posterior mean after this
    /// round's observation, i.e. the estimate one would report if stopping.
    pub posterior_best: Option<Vec<f64>>,
    pub regret: Option<f64>,
    pub cumulative_regret: Option<f64>,
    pub failed: bool,
}

#[derive(Debug, Clone)]
pub struct LearningTrace {
    pub records: Vec<IterationRecord>,
    /// MES: mean applied estimate over the trailing averaging window.
    /// GP-UCB: grid point with the lowest posterior mean after the last round.
    pub final_estimate: Vec<f64>,
}

impl LearningTrace {
    pub fn has_regret(&self) -> bool {
        self.records.iter().any(|r| r.regret.is_some())
    }

    pub fn costs(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.cost)
    }
}

/// Extremum-seeking loop: run an episode, feed its cost to the dither
/// recurrence, apply the updated estimate in the next episode.
pub fn learn_mes(cfg: &Config) -> Result<LearningTrace> {
    let params = cfg.mes_params()?;
    let dim = params.dim();
    let mut state = MesState::new(dim);
    let mut estimate = cfg.initial_estimate()?;
    let mut last_finite: Option<f64> = None;
    let mut running_min = f64::INFINITY;
    let mut records = Vec::with_capacity(cfg.estimator.iterations);

    for k in 0..cfg.estimator.iterations {
        let episode = run_episode(&estimate, cfg)?;
        // A failed episode cannot feed the recurrence; clamp to the last
        // finite cost (or zero at the very start, freezing the oscillator).
        let (cost, failed) = if episode.failed {
            log::warn!(
                "iteration {k}: episode failed ({}), clamping cost",
                episode.failure.as_deref().unwrap_or("unknown")
            );
            (last_finite.unwrap_or(0.0), true)
        } else {
            last_finite = Some(episode.cost);
            (episode.cost, false)
        };
        running_min = running_min.min(cost);
        records.push(IterationRecord {
            iteration: k,
            cost,
            running_min,
            estimate: estimate.clone(),
            posterior_best: None,
            regret: None,
            cumulative_regret: None,
            failed,
        });
        let (next, next_estimate) = state.step(&params, cost)?;
        state = next;
        estimate = next_estimate;
    }

    // Average over the trailing window to strip the residual dither.
    let window = cfg.estimator.mes.average_window.max(1).min(records.len());
    let mut final_estimate = vec![0.0; dim];
    for record in &records[records.len() - window..] {
        for (acc, &v) in final_estimate.iter_mut().zip(&record.estimate) {
            *acc += v;
        }
    }
    for v in &mut final_estimate {
        *v /= window as f64;
    }

    Ok(LearningTrace {
        records,
        final_estimate,
    })
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// GP-UCB loop: acquire the next grid point, run its episode, condition the
/// posterior on the (optionally noise-corrupted) cost.
pub fn learn_gpucb(cfg: &Config) -> Result<LearningTrace> {
    let grid = cfg.grid()?;
    let kernel = cfg.kernel()?;
    let gp_cfg = &cfg.estimator.gpucb;
    let mut data = GpDataset::new(gp_cfg.noise_std)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let noise = if gp_cfg.observation_noise > 0.0 {
        Some(
            Normal::new(0.0, gp_cfg.observation_noise)
                .map_err(|e| Error::Config(format!("observation noise: {e}")))?,
        )
    } else {
        None
    };

    // In test/oracle mode, evaluate the true cost over the whole grid once so
    // regret against the grid optimum can be logged per round.
    let oracle = if gp_cfg.oracle_sweep {
        let costs = episode_costs(grid.points(), cfg)?;
        let best = costs
            .iter()
            .copied()
            .filter(|c| c.is_finite())
            .fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return Err(Error::Numerical(
                "every grid episode failed; no regret baseline".into(),
            ));
        }
        Some(best)
    } else {
        None
    };

    let mut regret_log = RegretLog::new();
    let mut running_min = f64::INFINITY;
    let mut max_observed: f64 = 0.0;
    let mut records = Vec::with_capacity(cfg.estimator.iterations);
    let mut posterior_best: Vec<f64> = cfg.initial_estimate()?;

    for t in 1..=cfg.estimator.iterations {
        let mean_offset = if gp_cfg.center_costs && !data.is_empty() {
            median(data.values())
        } else {
            0.0
        };
        let (idx, point) = acquire(&grid, &data, kernel, t, gp_cfg.confidence, mean_offset)?;
        let episode = run_episode(&point, cfg)?;
        // Failed episodes become a large finite penalty the posterior can
        // absorb as data (ten times the largest cost seen so far).
        let (cost, failed) = if episode.failed {
            let penalty = 10.0 * max_observed.max(0.1);
            log::warn!(
                "round {t}: episode at grid point {idx} failed ({}), penalizing with {penalty}",
                episode.failure.as_deref().unwrap_or("unknown")
            );
            (penalty, true)
        } else {
            max_observed = max_observed.max(episode.cost);
            (episode.cost, false)
        };
        let observed = match (&noise, failed) {
            (Some(dist), false) => cost + dist.sample(&mut rng),
            _ => cost,
        };
        data.observe(point.clone(), observed)?;

        let (regret, cumulative_regret) = if let Some(best) = oracle {
            regret_log.record(cost, best);
            (
                regret_log.instant().last().copied(),
                regret_log.cumulative().last().copied(),
            )
        } else {
            (None, None)
        };

        running_min = running_min.min(observed);
        let fitted = data.fit(kernel, mean_offset)?;
        let means = posterior_means(&grid, &fitted)?;
        let best_idx = argmin_lowest_index(&means).expect("grid is non-empty");
        posterior_best = grid.point(best_idx).to_vec();

        records.push(IterationRecord {
            iteration: t - 1,
            cost: observed,
            running_min,
            estimate: point,
            posterior_best: Some(posterior_best.clone()),
            regret,
            cumulative_regret,
            failed,
        });
    }

    Ok(LearningTrace {
        records,
        final_estimate: posterior_best,
    })
}
