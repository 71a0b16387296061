//! Discrete multi-parametric extremum-seeking estimator.
//!
//! One oscillator per learned parameter integrates the measured episode cost
//! against a sinusoidal dither; the reported estimate is the oscillator state
//! plus a quadrature dither term. Descending the cost this way needs no model
//! of the plant, only the scalar cost readout per episode.

use std::f64::consts::FRAC_PI_2;

use num_rational::BigRational;

use crate::error::{Error, Result};

/// Dither amplitudes, frequencies and the episode duration driving the
/// discrete update. `amplitude_decay` of 1 keeps the printed constant-dither
/// recurrence; values in (0, 1) shrink the dither geometrically per iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MesParams {
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub episode_duration: f64,
    pub amplitude_decay: f64,
}

impl MesParams {
    pub fn new(amplitudes: Vec<f64>, frequencies: Vec<f64>, episode_duration: f64) -> Result<Self> {
        let params = Self {
            amplitudes,
            frequencies,
            episode_duration,
            amplitude_decay: 1.0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Residual oscillation radius `sqrt(Σ a_i²)` contributed by the dither.
    pub fn dither_radius(&self) -> f64 {
        self.amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.amplitudes.is_empty() || self.amplitudes.len() != self.frequencies.len() {
            return Err(Error::Config(
                "amplitude and frequency lists must be non-empty and equal length".into(),
            ));
        }
        if self.amplitudes.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::Config("dither amplitudes must be finite and >= 0".into()));
        }
        if self.frequencies.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::Config("dither frequencies must be positive".into()));
        }
        if !validate_frequencies(&self.frequencies) {
            return Err(Error::Config(
                "dither frequencies must be pairwise distinct with no pairwise sum equal to another entry".into(),
            ));
        }
        if !(self.episode_duration > 0.0) {
            return Err(Error::Config("episode duration must be positive".into()));
        }
        if !(self.amplitude_decay > 0.0 && self.amplitude_decay <= 1.0) {
            return Err(Error::Config("amplitude decay must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Check the dither-frequency conditions: pairwise distinct, and no pairwise
/// sum coincides with any entry. Comparison is exact over the rationals the
/// configured floats denote, so no rounding in the sum can mask a collision.
pub fn validate_frequencies(frequencies: &[f64]) -> bool {
    let Some(rationals) = frequencies
        .iter()
        .map(|&w| BigRational::from_float(w))
        .collect::<Option<Vec<_>>>()
    else {
        return false;
    };
    for i in 0..rationals.len() {
        for j in 0..rationals.len() {
            if i != j && rationals[i] == rationals[j] {
                return false;
            }
            if i <= j {
                let sum = &rationals[i] + &rationals[j];
                if rationals.contains(&sum) {
                    return false;
                }
            }
        }
    }
    true
}

/// Oscillator states plus the iteration counter.
#[derive(Debug, Clone, PartialEq)]
pub struct MesState {
    oscillators: Vec<f64>,
    iteration: u64,
    amplitude_scale: f64,
}

impl MesState {
    /// Start at zero oscillator state, matching a zero initial estimate.
    pub fn new(dim: usize) -> Self {
        Self {
            oscillators: vec![0.0; dim],
            iteration: 0,
            amplitude_scale: 1.0,
        }
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn oscillators(&self) -> &[f64] {
        &self.oscillators
    }

    /// Current estimate without advancing the state (oscillator plus dither at
    /// the current iteration phase).
    pub fn estimate(&self, params: &MesParams) -> Vec<f64> {
        let k = self.iteration as f64;
        (0..self.oscillators.len())
            .map(|i| {
                let phase = params.frequencies[i] * params.episode_duration * k;
                self.oscillators[i]
                    + params.amplitudes[i] * self.amplitude_scale * (phase - FRAC_PI_2).sin()
            })
            .collect()
    }

    /// Advance one iteration on the measured cost and return the next state
    /// together with the probe estimate to apply in the next episode:
    ///
    /// ```text
    /// x_i(k+1)   = x_i(k) + a_i t_f sin(w_i t_f k + pi/2) J(est(k))
    /// est_i(k+1) = x_i(k+1) + a_i sin(w_i t_f (k+1) - pi/2)
    /// ```
    ///
    /// This is forward Euler on the continuous-time law with the dither and
    /// its demodulator sampled at the same phase `w_i t_f k`. Pairing them one
    /// index apart instead (demodulating `J(est(k))` with the phase-(k+1)
    /// sinusoid) scales each channel's loop gain by `cos(w_i t_f mod 2pi)`,
    /// which flips the sign of the descent direction whenever that cosine is
    /// negative.
    ///
    /// A non-finite or negative cost rejects the iteration and leaves the
    /// state untouched.
    pub fn step(&self, params: &MesParams, cost: f64) -> Result<(MesState, Vec<f64>)> {
        if self.oscillators.len() != params.dim() {
            return Err(Error::Dimension(format!(
                "state has {} oscillators, params have {}",
                self.oscillators.len(),
                params.dim()
            )));
        }
        if !cost.is_finite() || cost < 0.0 {
            return Err(Error::InvalidCost(cost));
        }
        let k = self.iteration as f64;
        let t_f = params.episode_duration;
        let mut next = self.clone();
        next.amplitude_scale = self.amplitude_scale * params.amplitude_decay;
        let mut estimate = Vec::with_capacity(params.dim());
        for i in 0..params.dim() {
            let a_demod = params.amplitudes[i] * self.amplitude_scale;
            let a_probe = params.amplitudes[i] * next.amplitude_scale;
            let phase = params.frequencies[i] * t_f * k;
            let phase_next = params.frequencies[i] * t_f * (k + 1.0);
            next.oscillators[i] += a_demod * t_f * (phase + FRAC_PI_2).sin() * cost;
            estimate.push(next.oscillators[i] + a_probe * (phase_next - FRAC_PI_2).sin());
        }
        next.iteration += 1;
        Ok((next, estimate))
    }
}
