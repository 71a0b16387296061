//! GP-UCB optimizer over a finite candidate grid.
//!
//! A zero-mean Gaussian process with a unit-variance squared-exponential
//! kernel models the episode cost as a function of the uncertainty estimate.
//! Each round picks the grid point minimizing `mean - sqrt(beta_t) * std`,
//! i.e. the optimistic lower confidence bound, observes the (possibly noisy)
//! cost there, and conditions the posterior on it.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Prior signal variance of the GP (fixed; costs are modeled on this scale).
pub const PRIOR_VARIANCE: f64 = 1.0;

/// Posterior variances this far below zero are a numerical fault, not noise.
pub const VARIANCE_TOL: f64 = 1e-12;

/// Unit-variance squared-exponential kernel `exp(-‖x - x'‖² / (2 l²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredExpKernel {
    length_scale: f64,
}

impl SquaredExpKernel {
    pub fn new(length_scale: f64) -> Result<Self> {
        if !(length_scale > 0.0) || !length_scale.is_finite() {
            return Err(Error::Config(format!(
                "kernel length scale must be positive, got {length_scale}"
            )));
        }
        Ok(Self { length_scale })
    }

    pub fn length_scale(&self) -> f64 {
        self.length_scale
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        let sq_dist: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        (-sq_dist / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

/// Query points with their noisy cost observations.
#[derive(Debug, Clone, PartialEq)]
pub struct GpDataset {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    noise_std: f64,
}

impl GpDataset {
    pub fn new(noise_std: f64) -> Result<Self> {
        if !(noise_std > 0.0) || !noise_std.is_finite() {
            return Err(Error::Config(format!(
                "GP noise parameter must be positive, got {noise_std}"
            )));
        }
        Ok(Self {
            points: Vec::new(),
            values: Vec::new(),
            noise_std,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    /// Append one observation. The harness decides whether to add simulated
    /// noise before calling this; the dataset stores values as given.
    pub fn observe(&mut self, point: Vec<f64>, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::InvalidCost(value));
        }
        if point.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("query point has non-finite coordinates".into()));
        }
        if let Some(first) = self.points.first() {
            if first.len() != point.len() {
                return Err(Error::Dimension(format!(
                    "query point dimension {} does not match dataset dimension {}",
                    point.len(),
                    first.len()
                )));
            }
        }
        self.points.push(point);
        self.values.push(value);
        Ok(())
    }

    /// Factor the regularized Grammian once so many posterior queries can
    /// reuse it. `mean_offset` is subtracted from the observations before
    /// conditioning and added back to posterior means.
    pub fn fit(&self, kernel: SquaredExpKernel, mean_offset: f64) -> Result<FittedGp<'_>> {
        if self.is_empty() {
            return Ok(FittedGp {
                data: self,
                kernel,
                mean_offset,
                chol: None,
                alpha: DVector::zeros(0),
            });
        }
        let t = self.len();
        let gram = DMatrix::from_fn(t, t, |i, j| {
            let k = kernel.eval(&self.points[i], &self.points[j]);
            if i == j {
                k + self.noise_std * self.noise_std
            } else {
                k
            }
        });
        let chol = Cholesky::new(gram).ok_or_else(|| {
            Error::Numerical("regularized kernel matrix is not positive definite".into())
        })?;
        let centered = DVector::from_fn(t, |i, _| self.values[i] - mean_offset);
        let alpha = chol.solve(&centered);
        Ok(FittedGp {
            data: self,
            kernel,
            mean_offset,
            chol: Some(chol),
            alpha,
        })
    }
}

/// A factored posterior: predictions cost one triangular solve each.
pub struct FittedGp<'a> {
    data: &'a GpDataset,
    kernel: SquaredExpKernel,
    mean_offset: f64,
    chol: Option<Cholesky<f64, Dyn>>,
    alpha: DVector<f64>,
}

impl FittedGp<'_> {
    /// Posterior mean and variance at a query point. An empty dataset returns
    /// the prior `(0, 1)` (offset applied to the mean).
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        let Some(chol) = &self.chol else {
            return Ok((self.mean_offset, PRIOR_VARIANCE));
        };
        let t = self.data.len();
        let k_star = DVector::from_fn(t, |i, _| self.kernel.eval(&self.data.points[i], x));
        let mean = self.mean_offset + k_star.dot(&self.alpha);
        let solved = chol.solve(&k_star);
        let variance = PRIOR_VARIANCE - k_star.dot(&solved);
        if variance < -VARIANCE_TOL {
            return Err(Error::NegativeVariance(variance));
        }
        if variance < 0.0 {
            log::warn!("clamping posterior variance {variance:.3e} to zero");
            return Ok((mean, 0.0));
        }
        Ok((mean, variance))
    }
}

/// Convenience one-shot posterior evaluation.
pub fn gp_posterior(data: &GpDataset, kernel: SquaredExpKernel, x: &[f64]) -> Result<(f64, f64)> {
    data.fit(kernel, 0.0)?.predict(x)
}

/// Confidence scaling `beta_t = 2 log(|grid| t² π² / (6 δ))`, increasing in `t`.
pub fn beta_schedule(t: usize, grid_size: usize, delta: f64) -> Result<f64> {
    if t < 1 || grid_size < 1 {
        return Err(Error::Config(
            "round index and grid size must be at least one".into(),
        ));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!(
            "confidence parameter must lie in (0, 1), got {delta}"
        )));
    }
    let t = t as f64;
    let card = grid_size as f64;
    Ok(2.0 * (card * t * t * std::f64::consts::PI.powi(2) / (6.0 * delta)).ln())
}

/// Finite uniform search grid over an axis-aligned box.
///
/// Points are enumerated row-major with the last axis fastest, so index 0 is
/// the lower corner; ties in the acquisition always resolve to the lowest
/// index, keeping query sequences deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    bounds: Vec<(f64, f64)>,
    counts: Vec<usize>,
    points: Vec<Vec<f64>>,
}

impl SearchGrid {
    pub fn from_box(bounds: &[(f64, f64)], resolution: f64) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Config("search box needs at least one dimension".into()));
        }
        if !(resolution > 0.0) {
            return Err(Error::Config(format!(
                "grid resolution must be positive, got {resolution}"
            )));
        }
        let mut counts = Vec::with_capacity(bounds.len());
        for &(lo, hi) in bounds {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Config(format!("invalid box interval [{lo}, {hi}]")));
            }
            let span = (hi - lo) / resolution;
            if (span - span.round()).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "resolution {resolution} does not evenly divide [{lo}, {hi}]"
                )));
            }
            counts.push(span.round() as usize + 1);
        }
        let total: usize = counts.iter().product();
        let dim = bounds.len();
        let mut points = Vec::with_capacity(total);
        for flat in 0..total {
            let mut point = vec![0.0; dim];
            let mut rem = flat;
            for axis in (0..dim).rev() {
                let idx = rem % counts[axis];
                rem /= counts[axis];
                let (lo, hi) = bounds[axis];
                let steps = (counts[axis] - 1) as f64;
                point[axis] = if steps == 0.0 {
                    lo
                } else {
                    lo + (hi - lo) * (idx as f64 / steps)
                };
            }
            points.push(point);
        }
        Ok(Self {
            bounds: bounds.to_vec(),
            counts,
            points,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn point(&self, idx: usize) -> &[f64] {
        &self.points[idx]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.bounds.len()
            && x.iter()
                .zip(&self.bounds)
                .all(|(&v, &(lo, hi))| v >= lo - 1e-12 && v <= hi + 1e-12)
    }
}

/// Evaluate `mean - sqrt(beta) * std` on every grid point.
///
/// With the `parallel` feature the scan fans out over a rayon pool; results
/// are collected in grid order either way, so downstream tie-breaking (and
/// therefore the whole query sequence) does not depend on scheduling.
pub fn acquisition_values(
    grid: &SearchGrid,
    fitted: &FittedGp<'_>,
    beta: f64,
) -> Result<Vec<f64>> {
    let eval = |point: &Vec<f64>| -> Result<f64> {
        let (mean, variance) = fitted.predict(point)?;
        Ok(mean - beta.sqrt() * variance.sqrt())
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        grid.points().par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        grid.points().iter().map(eval).collect()
    }
}

/// Posterior means over the whole grid (same dispatch as `acquisition_values`).
pub fn posterior_means(grid: &SearchGrid, fitted: &FittedGp<'_>) -> Result<Vec<f64>> {
    let eval = |point: &Vec<f64>| -> Result<f64> { Ok(fitted.predict(point)?.0) };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        grid.points().par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        grid.points().iter().map(eval).collect()
    }
}

/// Index of the smallest value, lowest index on ties.
pub fn argmin_lowest_index(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, bv)) if v >= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Pick the next query point at round `t` (1-based).
pub fn acquire(
    grid: &SearchGrid,
    data: &GpDataset,
    kernel: SquaredExpKernel,
    t: usize,
    delta: f64,
    mean_offset: f64,
) -> Result<(usize, Vec<f64>)> {
    if grid.is_empty() {
        return Err(Error::Config("search grid is empty".into()));
    }
    let beta = beta_schedule(t, grid.len(), delta)?;
    let fitted = data.fit(kernel, mean_offset)?;
    let values = acquisition_values(grid, &fitted, beta)?;
    let idx = argmin_lowest_index(&values).expect("grid is non-empty");
    Ok((idx, grid.point(idx).to_vec()))
}

/// Per-round and cumulative regret against the best grid point.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegretLog {
    instant: Vec<f64>,
    cumulative: Vec<f64>,
}

impl RegretLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record round cost `cost` against the grid optimum `best_cost`.
    pub fn record(&mut self, cost: f64, best_cost: f64) {
        let r = cost - best_cost;
        let total = self.cumulative.last().copied().unwrap_or(0.0) + r;
        self.instant.push(r);
        self.cumulative.push(total);
    }

    pub fn len(&self) -> usize {
        self.instant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instant.is_empty()
    }

    pub fn instant(&self) -> &[f64] {
        &self.instant
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Average regret `R_T / T` after `rounds` rounds.
    pub fn average_at(&self, rounds: usize) -> Option<f64> {
        if rounds == 0 || rounds > self.cumulative.len() {
            return None;
        }
        Some(self.cumulative[rounds - 1] / rounds as f64)
    }
}
