//! Feedback-linearizing control with a Lyapunov-reconstruction robust term.
//!
//! For a plant written in linearized form `y^(r) = b(ξ) + A(ξ) u + Δb` with
//! matched uncertainty `Δb = E Q(ξ, t)`, the full control is `u = u_n + u_r`:
//! the nominal part inverts the linearization around a pole-placing virtual
//! input, and the robust part adds damping scaled by `‖Q‖²` plus cancellation
//! of the estimated disturbance. The tracking-error dynamics are then
//! input-to-state stable with the estimation error as the input, which is what
//! makes the outer learning loops safe to plug in.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linear::{ErrorSystem, GainSet};
use crate::plant::CONDITION_LIMIT;

/// A plant in input-output linearized coordinates.
///
/// `ξ` stacks each output's derivative chain `[y_i, ẏ_i, ..., y_i^(r_i - 1)]`
/// block by block, the same ordering the tracking-error state uses.
pub trait ControlModel {
    fn output_dim(&self) -> usize;
    fn relative_degrees(&self) -> &[usize];
    /// Drift term `b(ξ)`.
    fn drift(&self, xi: &DVector<f64>) -> Result<DVector<f64>>;
    /// Input gain `A(ξ)`, invertible on the operating set.
    fn gain(&self, xi: &DVector<f64>) -> Result<DMatrix<f64>>;
    /// Known disturbance basis `Q(ξ, t)` multiplying the unknown parameters.
    fn disturbance_basis(&self, xi: &DVector<f64>, t: f64) -> DVector<f64>;
}

/// Invert with a coarse condition estimate; refuses nearly singular gains.
pub fn checked_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = a
        .clone()
        .try_inverse()
        .ok_or(Error::SingularGain { cond: f64::INFINITY })?;
    let cond = a.norm() * inv.norm();
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::SingularGain { cond });
    }
    Ok(inv)
}

/// Stack per-output tracking errors into the error state
/// `z = (e_1, ė_1, ..., e_m, ...)`, one derivative chain per output.
pub fn stack_errors(
    outputs: &[Vec<f64>],
    refs: &[Vec<f64>],
    degrees: &[usize],
) -> Result<DVector<f64>> {
    if outputs.len() != degrees.len() || refs.len() != degrees.len() {
        return Err(Error::Dimension("output/reference channel count mismatch".into()));
    }
    let n: usize = degrees.iter().sum();
    let mut z = DVector::zeros(n);
    let mut offset = 0;
    for (i, &r) in degrees.iter().enumerate() {
        if outputs[i].len() < r || refs[i].len() < r {
            return Err(Error::Dimension(format!(
                "channel {i} needs {r} derivatives, got {} measured / {} reference",
                outputs[i].len(),
                refs[i].len()
            )));
        }
        for j in 0..r {
            z[offset + j] = outputs[i][j] - refs[i][j];
        }
        offset += r;
    }
    Ok(z)
}

/// Pole-placing virtual input, one entry per output:
/// the feedforward `y_d^(r)` minus the gain-weighted error derivatives.
pub fn virtual_input(
    refs: &[Vec<f64>],
    outputs: &[Vec<f64>],
    gains: &GainSet,
) -> Result<DVector<f64>> {
    let degrees = gains.relative_degrees();
    if refs.len() != degrees.len() || outputs.len() != degrees.len() {
        return Err(Error::Dimension("gain/reference channel count mismatch".into()));
    }
    let mut v = DVector::zeros(degrees.len());
    for (i, row) in gains.rows().iter().enumerate() {
        let r = row.len();
        if refs[i].len() < r + 1 || outputs[i].len() < r {
            return Err(Error::Dimension(format!(
                "channel {i} needs reference derivatives up to order {r}"
            )));
        }
        let mut vi = refs[i][r];
        for (j, &k) in row.iter().enumerate() {
            vi -= k * (outputs[i][j] - refs[i][j]);
        }
        v[i] = vi;
    }
    Ok(v)
}

/// Which uncertainty entries the estimators adjust; the rest stay at known
/// fixed values (row-major over the `m x m` matrix).
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateLayout {
    dim: usize,
    learned: Vec<bool>,
    fixed: Vec<f64>,
}

impl EstimateLayout {
    pub fn new(dim: usize, learned: Vec<bool>, fixed: Vec<f64>) -> Result<Self> {
        if learned.len() != dim * dim || fixed.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "layout masks must have {} entries for a {dim}x{dim} matrix",
                dim * dim
            )));
        }
        if fixed.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("fixed estimate entries must be finite".into()));
        }
        if !learned.iter().any(|&l| l) {
            return Err(Error::Config("at least one uncertainty entry must be learned".into()));
        }
        Ok(Self { dim, learned, fixed })
    }

    /// Learn every entry of an `m x m` matrix.
    pub fn full(dim: usize) -> Self {
        Self {
            dim,
            learned: vec![true; dim * dim],
            fixed: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn learned_count(&self) -> usize {
        self.learned.iter().filter(|&&l| l).count()
    }

    /// Build the estimate matrix from learned values (row-major over learned
    /// slots) and the fixed baseline elsewhere.
    pub fn assemble(&self, learned_values: &[f64]) -> Result<DMatrix<f64>> {
        if learned_values.len() != self.learned_count() {
            return Err(Error::Dimension(format!(
                "expected {} learned values, got {}",
                self.learned_count(),
                learned_values.len()
            )));
        }
        if learned_values.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("learned estimate values must be finite".into()));
        }
        let mut next = 0;
        let mut flat = self.fixed.clone();
        for (slot, &is_learned) in self.learned.iter().enumerate() {
            if is_learned {
                flat[slot] = learned_values[next];
                next += 1;
            }
        }
        Ok(DMatrix::from_row_slice(self.dim, self.dim, &flat))
    }

    /// Pull the learned entries out of a full matrix, row-major.
    pub fn extract(&self, full: &DMatrix<f64>) -> Result<Vec<f64>> {
        if full.nrows() != self.dim || full.ncols() != self.dim {
            return Err(Error::Dimension("matrix does not match layout dimension".into()));
        }
        Ok(self
            .learned
            .iter()
            .enumerate()
            .filter(|&(_, &l)| l)
            .map(|(slot, _)| full[(slot / self.dim, slot % self.dim)])
            .collect())
    }
}

/// Everything the control law needs besides the plant: gains, the error-system
/// matrices (kept consistent with the gains) and the current estimate matrix.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    gains: GainSet,
    error_system: ErrorSystem,
    estimate: DMatrix<f64>,
}

impl ControllerConfig {
    pub fn new(gains: GainSet, estimate: DMatrix<f64>) -> Result<Self> {
        let error_system = ErrorSystem::from_gains(&gains)?;
        let m = error_system.output_dim();
        if estimate.nrows() != m || estimate.ncols() != m {
            return Err(Error::Dimension(format!(
                "estimate must be {m}x{m}, got {}x{}",
                estimate.nrows(),
                estimate.ncols()
            )));
        }
        if estimate.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("estimate matrix has non-finite entries".into()));
        }
        Ok(Self {
            gains,
            error_system,
            estimate,
        })
    }

    pub fn gains(&self) -> &GainSet {
        &self.gains
    }

    pub fn error_system(&self) -> &ErrorSystem {
        &self.error_system
    }

    pub fn estimate(&self) -> &DMatrix<f64> {
        &self.estimate
    }

    pub fn set_estimate(&mut self, estimate: DMatrix<f64>) -> Result<()> {
        let m = self.error_system.output_dim();
        if estimate.nrows() != m || estimate.ncols() != m {
            return Err(Error::Dimension("estimate dimension mismatch".into()));
        }
        if estimate.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("estimate matrix has non-finite entries".into()));
        }
        self.estimate = estimate;
        Ok(())
    }

    /// Lyapunov function `V(z) = zᵀ P z`.
    pub fn lyapunov_value(&self, z: &DVector<f64>) -> f64 {
        (z.transpose() * &self.error_system.lyapunov * z)[0]
    }

    /// Analytic `V̇ = -‖z‖² + 2 zᵀ P B δ` along the error dynamics, given the
    /// realized disturbance mismatch `δ = A u_r + Δb`.
    pub fn lyapunov_rate(&self, z: &DVector<f64>, delta: &DVector<f64>) -> f64 {
        let pz = &self.error_system.lyapunov * z;
        -z.norm_squared() + 2.0 * (pz.transpose() * &self.error_system.input * delta)[0]
    }
}

/// Nominal inverse-dynamics control `u_n = A⁻¹ (v_s - b)`.
pub fn nominal_control(
    model: &dyn ControlModel,
    xi: &DVector<f64>,
    v_s: &DVector<f64>,
) -> Result<DVector<f64>> {
    let a_inv = checked_inverse(&model.gain(xi)?)?;
    Ok(&a_inv * (v_s - model.drift(xi)?))
}

/// Robust term `u_r = -A⁻¹ (Bᵀ P z ‖Q‖² + Ê Q)`: state-dependent damping plus
/// cancellation of the estimated disturbance.
pub fn robust_control(
    model: &dyn ControlModel,
    xi: &DVector<f64>,
    t: f64,
    z: &DVector<f64>,
    cfg: &ControllerConfig,
) -> Result<DVector<f64>> {
    let sys = cfg.error_system();
    if z.len() != sys.state_dim() {
        return Err(Error::Dimension(format!(
            "error state has length {}, expected {}",
            z.len(),
            sys.state_dim()
        )));
    }
    let a_inv = checked_inverse(&model.gain(xi)?)?;
    let q_basis = model.disturbance_basis(xi, t);
    let damping = sys.input.transpose() * (&sys.lyapunov * z) * q_basis.norm_squared();
    Ok(-(&a_inv * (damping + cfg.estimate() * q_basis)))
}

/// Full control `u = u_n + u_r`.
pub fn full_control(
    model: &dyn ControlModel,
    xi: &DVector<f64>,
    t: f64,
    z: &DVector<f64>,
    v_s: &DVector<f64>,
    cfg: &ControllerConfig,
) -> Result<DVector<f64>> {
    Ok(nominal_control(model, xi, v_s)? + robust_control(model, xi, t, z, cfg)?)
}
