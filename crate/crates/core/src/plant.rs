//! Two-link manipulator dynamics with injected parametric uncertainty.
//!
//! The rigid-body model is `H(q) q̈ + C(q, q̇) q̇ + G(q) = τ` with an additive
//! acceleration-level disturbance `-E G(q)` scaled by a matrix of unknown
//! constant parameters. The module also exposes the control-design view of the
//! plant (drift, input gain and disturbance basis) plus a fixed-step RK4
//! integrator with a blow-up guard.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::controller::ControlModel;
use crate::error::{Error, Result};

/// Default bound on state magnitudes; crossing it aborts an episode.
pub const DEFAULT_BLOWUP_BOUND: f64 = 1e6;

/// Condition-number estimate above which the inertia matrix is treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Which moment arm the first gravity entry uses for the second link.
///
/// `Paper` (the default model form) uses the full link length `l2`;
/// `Centroid` uses the center-of-mass distance `lc2` instead, which makes
/// gravity the gradient of a potential (and is what the energy-conservation
/// tests rely on).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GravityModel {
    #[default]
    Paper,
    Centroid,
}

/// Physical parameters of the two-link arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManipulatorParams {
    /// Link masses (kg).
    pub m1: f64,
    pub m2: f64,
    /// Link lengths (m).
    pub l1: f64,
    pub l2: f64,
    /// Center-of-mass distances (m).
    pub lc1: f64,
    pub lc2: f64,
    /// Link moments of inertia (kg m^2).
    pub i1: f64,
    pub i2: f64,
    /// Gravitational acceleration (m/s^2).
    pub gravity: f64,
    pub gravity_model: GravityModel,
}

impl Default for ManipulatorParams {
    fn default() -> Self {
        Self {
            m1: 10.5,
            m2: 5.5,
            l1: 1.1,
            l2: 1.1,
            lc1: 0.5,
            lc2: 0.5,
            i1: 11.0 / 12.0,
            i2: 5.5 / 12.0,
            gravity: 9.8,
            gravity_model: GravityModel::Paper,
        }
    }
}

impl ManipulatorParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("m1", self.m1),
            ("m2", self.m2),
            ("l1", self.l1),
            ("l2", self.l2),
            ("lc1", self.lc1),
            ("lc2", self.lc2),
            ("i1", self.i1),
            ("i2", self.i2),
            ("gravity", self.gravity),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Config(format!(
                    "plant parameter {name} must be strictly positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

/// Joint positions, velocities and simulation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    pub q: Vector2<f64>,
    pub dq: Vector2<f64>,
    pub t: f64,
}

impl PlantState {
    pub fn at_rest(q: Vector2<f64>) -> Self {
        Self {
            q,
            dq: Vector2::zeros(),
            t: 0.0,
        }
    }

    pub fn origin() -> Self {
        Self::at_rest(Vector2::zeros())
    }

    fn max_magnitude(&self) -> f64 {
        self.q
            .iter()
            .chain(self.dq.iter())
            .fold(0.0f64, |acc, &x| acc.max(x.abs()))
    }
}

/// Matrix of constant uncertainty multipliers on the gravity-shaped disturbance.
///
/// Flattening is row-major: index 0 is entry (1,1), index 1 is (1,2), and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyMatrix {
    e: DMatrix<f64>,
}

impl UncertaintyMatrix {
    pub fn new(e: DMatrix<f64>) -> Result<Self> {
        if !e.is_square() {
            return Err(Error::Dimension(format!(
                "uncertainty matrix must be square, got {}x{}",
                e.nrows(),
                e.ncols()
            )));
        }
        if e.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("uncertainty matrix has non-finite entries".into()));
        }
        Ok(Self { e })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            e: DMatrix::zeros(dim, dim),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("uncertainty rows must form a square matrix".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(dim, dim, &flat))
    }

    pub fn dim(&self) -> usize {
        self.e.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.e
    }

    /// Row-major flattening `[E(1,1), E(1,2), ..., E(m,m)]`.
    pub fn flatten(&self) -> DVector<f64> {
        let m = self.dim();
        DVector::from_fn(m * m, |k, _| self.e[(k / m, k % m)])
    }

    pub fn from_flat(dim: usize, flat: &[f64]) -> Result<Self> {
        if flat.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "expected {} entries for a {dim}x{dim} uncertainty matrix, got {}",
                dim * dim,
                flat.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(dim, dim, flat))
    }

    /// Fixed-size view for the two-link plant.
    pub fn as_matrix2(&self) -> Result<Matrix2<f64>> {
        if self.dim() != 2 {
            return Err(Error::Dimension(format!(
                "two-link plant needs a 2x2 uncertainty matrix, got {0}x{0}",
                self.dim()
            )));
        }
        Ok(Matrix2::new(
            self.e[(0, 0)],
            self.e[(0, 1)],
            self.e[(1, 0)],
            self.e[(1, 1)],
        ))
    }
}

/// Symmetric inertia matrix `H(q)`.
pub fn mass_matrix(q: &Vector2<f64>, p: &ManipulatorParams) -> Matrix2<f64> {
    let c2 = q[1].cos();
    let h22 = p.m2 * p.lc2 * p.lc2 + p.i2;
    let h12 = p.m2 * p.l1 * p.lc2 * c2 + h22;
    let h11 = p.m1 * p.lc1 * p.lc1
        + p.i1
        + p.m2 * (p.l1 * p.l1 + p.lc2 * p.lc2 + 2.0 * p.l1 * p.lc2 * c2)
        + p.i2;
    Matrix2::new(h11, h12, h12, h22)
}

/// Coriolis/centrifugal matrix `C(q, q̇)`.
pub fn coriolis_matrix(q: &Vector2<f64>, dq: &Vector2<f64>, p: &ManipulatorParams) -> Matrix2<f64> {
    let h = p.m2 * p.l1 * p.lc2 * q[1].sin();
    Matrix2::new(-h * dq[1], -h * dq[0] - h * dq[1], h * dq[0], 0.0)
}

/// Gravity torque vector `G(q)` in the configured variant.
pub fn gravity_vector(q: &Vector2<f64>, p: &ManipulatorParams) -> Vector2<f64> {
    let c1 = q[0].cos();
    let c12 = (q[0] + q[1]).cos();
    let second_link_arm = match p.gravity_model {
        GravityModel::Paper => p.l2,
        GravityModel::Centroid => p.lc2,
    };
    let g1 = p.m1 * p.lc1 * p.gravity * c1
        + p.m2 * p.gravity * (second_link_arm * c12 + p.l1 * c1);
    let g2 = p.m2 * p.lc2 * p.gravity * c12;
    Vector2::new(g1, g2)
}

fn checked_inverse2(h: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let inv = h
        .try_inverse()
        .ok_or(Error::SingularGain { cond: f64::INFINITY })?;
    let cond = h.norm() * inv.norm();
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::SingularGain { cond });
    }
    Ok(inv)
}

/// Joint accelerations under torque `tau` and uncertainty `e`.
///
/// Returns `(q̇, q̈)`, the time derivative of the `(q, q̇)` pair.
pub fn dynamics(
    state: &PlantState,
    tau: &Vector2<f64>,
    e: &Matrix2<f64>,
    p: &ManipulatorParams,
) -> Result<(Vector2<f64>, Vector2<f64>)> {
    let h_inv = checked_inverse2(&mass_matrix(&state.q, p))?;
    let c = coriolis_matrix(&state.q, &state.dq, p);
    let g = gravity_vector(&state.q, p);
    let ddq = h_inv * (tau - c * state.dq - g) - e * g;
    Ok((state.dq, ddq))
}

/// One classical fourth-order Runge-Kutta step with the torque held constant.
pub fn rk4_step(
    state: &PlantState,
    tau: &Vector2<f64>,
    e: &Matrix2<f64>,
    p: &ManipulatorParams,
    h: f64,
    blowup_bound: f64,
) -> Result<PlantState> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("integrator step must be positive, got {h}")));
    }
    let eval = |q: Vector2<f64>, dq: Vector2<f64>| -> Result<(Vector2<f64>, Vector2<f64>)> {
        dynamics(
            &PlantState { q, dq, t: state.t },
            tau,
            e,
            p,
        )
    };
    let (k1q, k1v) = eval(state.q, state.dq)?;
    let (k2q, k2v) = eval(state.q + k1q * (h / 2.0), state.dq + k1v * (h / 2.0))?;
    let (k3q, k3v) = eval(state.q + k2q * (h / 2.0), state.dq + k2v * (h / 2.0))?;
    let (k4q, k4v) = eval(state.q + k3q * h, state.dq + k3v * h)?;
    let next = PlantState {
        q: state.q + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (h / 6.0),
        dq: state.dq + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0),
        t: state.t + h,
    };
    let magnitude = next.max_magnitude();
    if !magnitude.is_finite() || magnitude > blowup_bound {
        return Err(Error::BlowUp {
            t: next.t,
            value: magnitude,
            bound: blowup_bound,
        });
    }
    Ok(next)
}

/// Control-design view of the manipulator: drift `-H⁻¹(C q̇ + G)`, input gain
/// `H⁻¹` and disturbance basis `-G(q)`, with relative degree two per joint.
#[derive(Debug, Clone)]
pub struct ManipulatorModel {
    params: ManipulatorParams,
    degrees: [usize; 2],
}

impl ManipulatorModel {
    pub fn new(params: ManipulatorParams) -> Self {
        Self {
            params,
            degrees: [2, 2],
        }
    }

    pub fn params(&self) -> &ManipulatorParams {
        &self.params
    }

    /// Pack a plant state into the controller's state ordering
    /// `[q1, q̇1, q2, q̇2]` (one block per output).
    pub fn pack_state(state: &PlantState) -> DVector<f64> {
        DVector::from_row_slice(&[state.q[0], state.dq[0], state.q[1], state.dq[1]])
    }

    fn unpack(xi: &DVector<f64>) -> (Vector2<f64>, Vector2<f64>) {
        (Vector2::new(xi[0], xi[2]), Vector2::new(xi[1], xi[3]))
    }
}

impl ControlModel for ManipulatorModel {
    fn output_dim(&self) -> usize {
        2
    }

    fn relative_degrees(&self) -> &[usize] {
        &self.degrees
    }

    fn drift(&self, xi: &DVector<f64>) -> Result<DVector<f64>> {
        let (q, dq) = Self::unpack(xi);
        let h_inv = checked_inverse2(&mass_matrix(&q, &self.params))?;
        let c = coriolis_matrix(&q, &dq, &self.params);
        let g = gravity_vector(&q, &self.params);
        let b = -(h_inv * (c * dq + g));
        Ok(DVector::from_row_slice(&[b[0], b[1]]))
    }

    fn gain(&self, xi: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (q, _) = Self::unpack(xi);
        let h_inv = checked_inverse2(&mass_matrix(&q, &self.params))?;
        Ok(DMatrix::from_row_slice(
            2,
            2,
            &[h_inv[(0, 0)], h_inv[(0, 1)], h_inv[(1, 0)], h_inv[(1, 1)]],
        ))
    }

    fn disturbance_basis(&self, xi: &DVector<f64>, _t: f64) -> DVector<f64> {
        let (q, _) = Self::unpack(xi);
        let g = gravity_vector(&q, &self.params);
        DVector::from_row_slice(&[-g[0], -g[1]])
    }
}
