//! Closed-loop error-system matrices and the Lyapunov certificate.
//!
//! Stabilizing output-feedback gains place each output channel's tracking-error
//! dynamics in companion form. This module assembles the block-diagonal error
//! dynamics matrix, the error input map, checks Hurwitzness and solves
//! `Aᵀ P + P A = -I` for the positive definite `P` the robust controller needs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues must have real part below the negated margin to count as stable.
pub const HURWITZ_MARGIN: f64 = 1e-9;

/// Frobenius residual allowed on the Lyapunov identity.
pub const LYAPUNOV_RESIDUAL_TOL: f64 = 1e-10;

/// Feedback gain rows, one per output channel.
///
/// Row `i` holds `(K_1, ..., K_r)` for a channel of relative degree `r`:
/// `K_j` multiplies the `(j-1)`-th error derivative in the virtual input.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    rows: Vec<Vec<f64>>,
}

impl GainSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Dimension("gain set needs at least one row".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::Dimension(format!("gain row {i} is empty")));
            }
            if row.iter().any(|g| !g.is_finite()) {
                return Err(Error::Config(format!("gain row {i} has non-finite entries")));
            }
        }
        Ok(Self { rows })
    }

    /// Proportional/derivative pairs, one per output (relative degree two each).
    pub fn pd_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(kp, kd)| vec![kp, kd]).collect())
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn relative_degrees(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    /// Total error-state dimension (sum of relative degrees).
    pub fn state_dim(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn output_dim(&self) -> usize {
        self.rows.len()
    }
}

/// Block-diagonal companion matrix of the closed-loop error dynamics.
///
/// Block `i` is `r_i x r_i` with ones on the superdiagonal and
/// `(-K_1, ..., -K_r)` as its last row.
pub fn companion_dynamics(gains: &GainSet) -> DMatrix<f64> {
    let n = gains.state_dim();
    let mut a = DMatrix::zeros(n, n);
    let mut offset = 0;
    for row in gains.rows() {
        let r = row.len();
        for j in 0..r - 1 {
            a[(offset + j, offset + j + 1)] = 1.0;
        }
        for (j, &k) in row.iter().enumerate() {
            a[(offset + r - 1, offset + j)] = -k;
        }
        offset += r;
    }
    a
}

/// Error input map: an `n x m` matrix with a single one per column, placed at
/// the last row of the corresponding output block.
pub fn error_input_map(degrees: &[usize]) -> Result<DMatrix<f64>> {
    if degrees.is_empty() || degrees.contains(&0) {
        return Err(Error::Dimension(
            "relative degrees must be positive and non-empty".into(),
        ));
    }
    let n: usize = degrees.iter().sum();
    let m = degrees.len();
    let mut b = DMatrix::zeros(n, m);
    let mut offset = 0;
    for (i, &r) in degrees.iter().enumerate() {
        b[(offset + r - 1, i)] = 1.0;
        offset += r;
    }
    Ok(b)
}

/// True iff every eigenvalue has real part below `-HURWITZ_MARGIN`.
pub fn is_hurwitz(a: &DMatrix<f64>) -> Result<bool> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "Hurwitz test needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite matrix entries".into()));
    }
    let eigs = a.clone().complex_eigenvalues();
    Ok(eigs.iter().all(|e| e.re < -HURWITZ_MARGIN))
}

/// Solve `Aᵀ P + P A = -I` for symmetric positive definite `P`.
///
/// Uses Kronecker vectorization with a dense LU solve; fine for the small
/// error systems this crate deals with (n never exceeds ten or so).
pub fn solve_lyapunov(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !is_hurwitz(a)? {
        return Err(Error::NotHurwitz);
    }
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    // vec(Aᵀ P) + vec(P A) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P), column-major stacking.
    let system = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_fn(n * n, |k, _| if k % (n + 1) == 0 { -1.0 } else { 0.0 });
    let vec_p = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("Lyapunov system singular".into()))?;
    let p = DMatrix::from_column_slice(n, n, vec_p.as_slice());
    let p = (&p + p.transpose()) * 0.5;

    let residual = (&at * &p + &p * a + &eye).norm();
    if residual > LYAPUNOV_RESIDUAL_TOL {
        return Err(Error::Numerical(format!(
            "Lyapunov residual {residual:.3e} exceeds {LYAPUNOV_RESIDUAL_TOL:.1e}"
        )));
    }
    if p.clone().symmetric_eigenvalues().iter().any(|&l| l <= 0.0) {
        return Err(Error::Numerical("Lyapunov solution not positive definite".into()));
    }
    Ok(p)
}

/// The assembled error system: dynamics `A`, input map `B` and Lyapunov
/// certificate `P` with `Aᵀ P + P A = -I`.
#[derive(Debug, Clone)]
pub struct ErrorSystem {
    pub dynamics: DMatrix<f64>,
    pub input: DMatrix<f64>,
    pub lyapunov: DMatrix<f64>,
}

impl ErrorSystem {
    pub fn from_gains(gains: &GainSet) -> Result<Self> {
        let dynamics = companion_dynamics(gains);
        if !is_hurwitz(&dynamics)? {
            return Err(Error::NotHurwitz);
        }
        let input = error_input_map(&gains.relative_degrees())?;
        let lyapunov = solve_lyapunov(&dynamics)?;
        Ok(Self {
            dynamics,
            input,
            lyapunov,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.dynamics.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.input.ncols()
    }
}
