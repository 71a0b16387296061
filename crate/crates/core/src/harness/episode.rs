//! Closed-loop episode execution and cost evaluation.
//!
//! One episode integrates the uncertain plant under the full controller with a
//! fixed estimate, sampling torque at the integrator rate (zero-order hold),
//! and accumulates the tracking cost by left-rectangle quadrature on the same
//! grid. Numerical failures (blow-up, singular inertia) mark the episode
//! failed with an infinite cost instead of erroring out, so the learning loops
//! can decide how to absorb them.

use nalgebra::{DVector, Vector2};

use super::config::Config;
use crate::controller::{
    nominal_control, robust_control, stack_errors, virtual_input, ControlModel, ControllerConfig,
};
use crate::error::{Error, Result};
use crate::plant::{rk4_step, ManipulatorModel, PlantState};

/// Logged closed-loop trajectories plus the scalar learning cost.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub time: Vec<f64>,
    pub q: Vec<Vector2<f64>>,
    pub dq: Vec<Vector2<f64>>,
    pub q_ref: Vec<Vector2<f64>>,
    pub dq_ref: Vec<Vector2<f64>>,
    pub torque: Vec<Vector2<f64>>,
    /// Tracking-error state `z` per sample.
    pub error_state: Vec<DVector<f64>>,
    /// Lyapunov function `V(z)` per sample.
    pub lyapunov_value: Vec<f64>,
    /// Analytic `V̇` per sample, evaluated with the true uncertainty.
    pub lyapunov_rate: Vec<f64>,
    /// Norm of the estimation error the controller ran with.
    pub estimate_error_norm: f64,
    /// Left-rectangle quadrature of the tracking cost; infinite when failed.
    pub cost: f64,
    pub failed: bool,
    pub failure: Option<String>,
}

impl EpisodeResult {
    pub fn max_error_norm(&self) -> f64 {
        self.error_state
            .iter()
            .fold(0.0f64, |acc, z| acc.max(z.norm()))
    }

    /// Mean error norm over the trailing `window` seconds.
    pub fn steady_state_error(&self, window: f64) -> f64 {
        let Some(&t_end) = self.time.last() else {
            return f64::NAN;
        };
        let cut = t_end - window;
        let tail: Vec<f64> = self
            .time
            .iter()
            .zip(&self.error_state)
            .filter(|(&t, _)| t >= cut)
            .map(|(_, z)| z.norm())
            .collect();
        if tail.is_empty() {
            f64::NAN
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    }
}

/// Run one episode with the given learned-parameter estimate over the
/// configured episode duration.
pub fn run_episode(estimate: &[f64], cfg: &Config) -> Result<EpisodeResult> {
    run_episode_with_duration(estimate, cfg, cfg.episode_duration())
}

/// As [`run_episode`] with an explicit duration (the error-sweep study runs
/// long past the reference horizon to read off steady-state errors).
pub fn run_episode_with_duration(
    estimate: &[f64],
    cfg: &Config,
    duration: f64,
) -> Result<EpisodeResult> {
    simulate(estimate, cfg, duration, true)
}

/// Episode cost only, skipping trajectory storage (used for grid sweeps).
pub(crate) fn episode_cost(estimate: &[f64], cfg: &Config) -> Result<f64> {
    Ok(simulate(estimate, cfg, cfg.episode_duration(), false)?.cost)
}

fn simulate(estimate: &[f64], cfg: &Config, duration: f64, record: bool) -> Result<EpisodeResult> {
    if !(duration > 0.0) {
        return Err(Error::Config(format!("episode duration must be positive, got {duration}")));
    }
    let params = cfg.plant;
    let model = ManipulatorModel::new(params);
    let layout = cfg.layout()?;
    let e_hat = layout.assemble(estimate)?;
    let ctrl = ControllerConfig::new(cfg.gain_set()?, e_hat.clone())?;
    let reference = cfg.reference()?;
    let e_true = cfg.true_uncertainty()?;
    let e_true_fixed = e_true.as_matrix2()?;
    let e_true_dyn = e_true.matrix().clone();
    let estimate_error_norm = (e_true.matrix() - &e_hat).norm();

    let h = cfg.episode.step;
    let blowup = cfg.episode.blowup_bound;
    // Small slack so durations that are not exact multiples of the step do
    // not lose their final sample to rounding.
    let steps = ((duration / h) + 1e-9).floor() as usize;
    let degrees = model.relative_degrees().to_vec();
    let m = model.output_dim();

    let pos_w = &cfg.cost.position_weights;
    let vel_w = &cfg.cost.velocity_weights;

    let capacity = if record { steps + 1 } else { 0 };
    let mut out = EpisodeResult {
        time: Vec::with_capacity(capacity),
        q: Vec::with_capacity(capacity),
        dq: Vec::with_capacity(capacity),
        q_ref: Vec::with_capacity(capacity),
        dq_ref: Vec::with_capacity(capacity),
        torque: Vec::with_capacity(capacity),
        error_state: Vec::with_capacity(capacity),
        lyapunov_value: Vec::with_capacity(capacity),
        lyapunov_rate: Vec::with_capacity(capacity),
        estimate_error_norm,
        cost: 0.0,
        failed: false,
        failure: None,
    };

    let q0 = cfg
        .episode
        .initial_q
        .as_deref()
        .unwrap_or(&cfg.reference.q_init);
    let dq0 = cfg.episode.initial_dq.as_deref().unwrap_or(&[0.0, 0.0]);
    let mut state = PlantState {
        q: Vector2::new(q0[0], q0[1]),
        dq: Vector2::new(dq0[0], dq0[1]),
        t: 0.0,
    };

    for k in 0..=steps {
        let t = k as f64 * h;
        let refs = reference.sample(t);
        let xi = ManipulatorModel::pack_state(&state);
        let outputs: Vec<Vec<f64>> = (0..m)
            .map(|i| vec![state.q[i], state.dq[i]])
            .collect();
        let ref_stacks: Vec<Vec<f64>> = refs
            .iter()
            .map(|r| vec![r.pos, r.vel, r.acc])
            .collect();
        let z = stack_errors(&outputs, &ref_stacks, &degrees)?;
        let v_s = virtual_input(&ref_stacks, &outputs, ctrl.gains())?;

        let control = (|| -> Result<(DVector<f64>, DVector<f64>)> {
            let u_n = nominal_control(&model, &xi, &v_s)?;
            let u_r = robust_control(&model, &xi, t, &z, &ctrl)?;
            Ok((u_n + &u_r, u_r))
        })();
        let (u_f, u_r) = match control {
            Ok(pair) => pair,
            Err(e @ Error::SingularGain { .. }) => {
                out.failed = true;
                out.failure = Some(e.to_string());
                out.cost = f64::INFINITY;
                return Ok(out);
            }
            Err(e) => return Err(e),
        };
        let tau = Vector2::new(u_f[0], u_f[1]);

        if record {
            let q_basis = model.disturbance_basis(&xi, t);
            let delta = model.gain(&xi)? * &u_r + &e_true_dyn * q_basis;
            out.time.push(t);
            out.q.push(state.q);
            out.dq.push(state.dq);
            out.q_ref.push(Vector2::new(refs[0].pos, refs[1].pos));
            out.dq_ref.push(Vector2::new(refs[0].vel, refs[1].vel));
            out.torque.push(tau);
            out.lyapunov_value.push(ctrl.lyapunov_value(&z));
            out.lyapunov_rate.push(ctrl.lyapunov_rate(&z, &delta));
            out.error_state.push(z.clone());
        }

        if k < steps {
            let mut stage = 0.0;
            let mut offset = 0;
            for (i, &r) in degrees.iter().enumerate() {
                stage += pos_w[i] * z[offset] * z[offset] + vel_w[i] * z[offset + 1] * z[offset + 1];
                offset += r;
            }
            out.cost += stage * h;

            match rk4_step(&state, &tau, &e_true_fixed, &params, h, blowup) {
                Ok(next) => state = next,
                Err(e @ (Error::BlowUp { .. } | Error::SingularGain { .. })) => {
                    out.failed = true;
                    out.failure = Some(e.to_string());
                    out.cost = f64::INFINITY;
                    return Ok(out);
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}
