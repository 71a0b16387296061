//! Quintic rest-to-rest reference trajectories.
//!
//! Each channel is a fifth-order polynomial in the normalized time `s = t/t_f`
//! whose six coefficients are solved from the boundary conditions: start and
//! end positions with zero velocity and acceleration at both ends.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Position, velocity and acceleration of a reference at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefSample {
    pub pos: f64,
    pub vel: f64,
    pub acc: f64,
}

/// One channel's quintic profile, valid on `[0, t_f]` and held constant outside.
#[derive(Debug, Clone)]
pub struct QuinticProfile {
    coeffs: [f64; 6],
    t_f: f64,
    q_init: f64,
    q_final: f64,
}

impl QuinticProfile {
    /// Solve the six boundary conditions for a rest-to-rest move.
    pub fn rest_to_rest(q_init: f64, q_final: f64, t_f: f64) -> Result<Self> {
        if !(t_f > 0.0) {
            return Err(Error::Config(format!("trajectory duration must be positive, got {t_f}")));
        }
        if !q_init.is_finite() || !q_final.is_finite() {
            return Err(Error::Config("trajectory endpoints must be finite".into()));
        }
        // Rows: value/velocity/acceleration at s = 0 and s = 1.
        let system = DMatrix::from_row_slice(
            6,
            6,
            &[
                1.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 2.0, 0.0, 0.0, 0.0, //
                1.0, 1.0, 1.0, 1.0, 1.0, 1.0, //
                0.0, 1.0, 2.0, 3.0, 4.0, 5.0, //
                0.0, 0.0, 2.0, 6.0, 12.0, 20.0,
            ],
        );
        let rhs = DVector::from_row_slice(&[q_init, 0.0, 0.0, q_final, 0.0, 0.0]);
        let sol = system
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numerical("quintic boundary system singular".into()))?;
        let residual = (&system * &sol - &rhs).norm();
        if residual > 1e-12 * (1.0 + q_init.abs() + q_final.abs()) {
            return Err(Error::Numerical(format!(
                "quintic boundary residual {residual:.3e}"
            )));
        }
        let mut coeffs = [0.0; 6];
        coeffs.copy_from_slice(sol.as_slice());
        Ok(Self {
            coeffs,
            t_f,
            q_init,
            q_final,
        })
    }

    /// Polynomial coefficients in powers of `s = t/t_f`.
    pub fn coefficients(&self) -> &[f64; 6] {
        &self.coeffs
    }

    pub fn duration(&self) -> f64 {
        self.t_f
    }

    pub fn endpoint(&self) -> f64 {
        self.q_final
    }

    /// Evaluate position, velocity and acceleration at time `t`.
    ///
    /// Outside `[0, t_f]` the profile holds the nearest endpoint with zero
    /// velocity and acceleration, so episodes may overrun slightly without
    /// injecting a reference discontinuity.
    pub fn sample(&self, t: f64) -> RefSample {
        if t <= 0.0 {
            return RefSample {
                pos: self.q_init,
                vel: 0.0,
                acc: 0.0,
            };
        }
        if t >= self.t_f {
            return RefSample {
                pos: self.q_final,
                vel: 0.0,
                acc: 0.0,
            };
        }
        let s = t / self.t_f;
        let c = &self.coeffs;
        let pos = ((((c[5] * s + c[4]) * s + c[3]) * s + c[2]) * s + c[1]) * s + c[0];
        let dpos = (((5.0 * c[5] * s + 4.0 * c[4]) * s + 3.0 * c[3]) * s + 2.0 * c[2]) * s + c[1];
        let ddpos = ((20.0 * c[5] * s + 12.0 * c[4]) * s + 6.0 * c[3]) * s + 2.0 * c[2];
        RefSample {
            pos,
            vel: dpos / self.t_f,
            acc: ddpos / (self.t_f * self.t_f),
        }
    }
}

/// A bundle of per-channel profiles sampled together.
#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    channels: Vec<QuinticProfile>,
}

impl ReferenceTrajectory {
    pub fn new(channels: Vec<QuinticProfile>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::Config("reference needs at least one channel".into()));
        }
        Ok(Self { channels })
    }

    /// Same rest-to-rest move on every channel.
    pub fn uniform(q_init: f64, q_final: f64, t_f: f64, channels: usize) -> Result<Self> {
        let profile = QuinticProfile::rest_to_rest(q_init, q_final, t_f)?;
        Ok(Self {
            channels: vec![profile; channels.max(1)],
        })
    }

    pub fn per_channel(q_init: &[f64], q_final: &[f64], t_f: f64) -> Result<Self> {
        if q_init.len() != q_final.len() {
            return Err(Error::Dimension(
                "reference start/end vectors differ in length".into(),
            ));
        }
        let channels = q_init
            .iter()
            .zip(q_final)
            .map(|(&a, &b)| QuinticProfile::rest_to_rest(a, b, t_f))
            .collect::<Result<Vec<_>>>()?;
        Self::new(channels)
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channel(&self, i: usize) -> &QuinticProfile {
        &self.channels[i]
    }

    pub fn sample(&self, t: f64) -> Vec<RefSample> {
        self.channels.iter().map(|c| c.sample(t)).collect()
    }
}
