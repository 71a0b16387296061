//! Experiment configuration: one TOML document with flat per-module sections.
//!
//! Every field has a default matching the reference two-link experiment, so an
//! empty file (or no file at all) runs the canonical case. A resolved config
//! plus seed is written next to all outputs as `manifest.toml`; feeding that
//! manifest back in reproduces the run byte for byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::EstimateLayout;
use crate::error::{Error, Result};
use crate::gpucb::{SearchGrid, SquaredExpKernel};
use crate::linear::{ErrorSystem, GainSet};
use crate::mes::MesParams;
use crate::plant::{ManipulatorParams, UncertaintyMatrix};
use crate::trajectory::ReferenceTrajectory;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub run: RunSection,
    pub plant: ManipulatorParams,
    pub uncertainty: UncertaintySection,
    pub gains: GainsSection,
    pub reference: ReferenceSection,
    pub episode: EpisodeSection,
    pub cost: CostSection,
    pub estimator: EstimatorSection,
    pub sweep: SweepSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<RunMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// True uncertainty injected into the plant, plus which entries the
/// estimators are allowed to learn (the rest stay at `fixed`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UncertaintySection {
    pub true_values: Vec<Vec<f64>>,
    pub learned: Vec<Vec<bool>>,
    pub fixed: Vec<Vec<f64>>,
}

impl Default for UncertaintySection {
    fn default() -> Self {
        Self {
            true_values: vec![vec![0.3, 0.6], vec![0.0, 0.0]],
            learned: vec![vec![true, true], vec![false, false]],
            fixed: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        }
    }
}

/// Per-joint PD gains. The closed-loop poles per joint solve
/// `s^2 + kd s + kp = 0`; defaults give a critically damped double pole at -5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainsSection {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
}

impl Default for GainsSection {
    fn default() -> Self {
        Self {
            kp: vec![25.0, 25.0],
            kd: vec![10.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceSection {
    pub q_init: Vec<f64>,
    pub q_final: Vec<f64>,
    pub duration: f64,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self {
            q_init: vec![0.0, 0.0],
            q_final: vec![1.5, 1.5],
            duration: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeSection {
    pub step: f64,
    /// Episode length; reference duration when unset.
    pub duration: Option<f64>,
    pub blowup_bound: f64,
    /// Initial joint positions; the reference start when unset.
    pub initial_q: Option<Vec<f64>>,
    /// Initial joint velocities; rest when unset.
    pub initial_dq: Option<Vec<f64>>,
}

impl Default for EpisodeSection {
    fn default() -> Self {
        Self {
            step: 1e-3,
            duration: None,
            blowup_bound: 1e6,
            initial_q: None,
            initial_dq: None,
        }
    }
}

/// Diagonal weights of the tracking cost on position and velocity errors.
///
/// The absolute scale matters: the cost value is the loop gain of the
/// extremum-seeking recurrence (drift per iteration is `a_i t_f J`) and the
/// contrast the GP acquisition sees against its unit prior variance. The
/// defaults put the worst-case episode cost at order one, which makes both
/// estimators converge inside their default budgets; the 10:1 position/
/// velocity ratio keeps the cost position-dominant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostSection {
    pub position_weights: Vec<f64>,
    pub velocity_weights: Vec<f64>,
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            position_weights: vec![100.0, 100.0],
            velocity_weights: vec![10.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Mes,
    Gpucb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorSection {
    pub kind: EstimatorKind,
    pub iterations: usize,
    pub mes: MesSection,
    pub gpucb: GpucbSection,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Mes,
            iterations: 300,
            mes: MesSection::default(),
            gpucb: GpucbSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MesSection {
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    /// Geometric per-iteration dither decay; 1 keeps the constant dither.
    pub amplitude_decay: f64,
    /// The reported estimate averages this many trailing iterations.
    pub average_window: usize,
}

impl Default for MesSection {
    fn default() -> Self {
        Self {
            amplitudes: vec![0.1, 0.05],
            frequencies: vec![7.0, 5.0],
            amplitude_decay: 1.0,
            average_window: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpucbSection {
    /// GP noise parameter (regularizes the Grammian even for noiseless data).
    pub noise_std: f64,
    pub length_scale: f64,
    /// Confidence parameter of the beta schedule.
    pub confidence: f64,
    /// Search box, one (lo, hi) pair per learned parameter.
    pub bounds: Vec<(f64, f64)>,
    pub resolution: f64,
    /// Standard deviation of simulated observation noise added to episode
    /// costs before conditioning; zero keeps observations exact.
    pub observation_noise: f64,
    /// Median-center costs before conditioning the zero-mean prior.
    pub center_costs: bool,
    /// Evaluate the true cost on every grid point once and log regret columns.
    pub oracle_sweep: bool,
}

impl Default for GpucbSection {
    fn default() -> Self {
        Self {
            noise_std: 0.1,
            length_scale: 0.2,
            confidence: 0.05,
            bounds: vec![(0.0, 1.0), (0.0, 1.0)],
            resolution: 0.02,
            observation_noise: 0.0,
            center_costs: false,
            oracle_sweep: false,
        }
    }
}

/// Fixed estimate errors used by the steady-state-vs-error study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub norms: Vec<f64>,
    pub duration: f64,
    /// Trailing window over which the steady-state error norm is averaged.
    pub window: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            norms: vec![0.1, 0.2, 0.4, 0.8],
            duration: 10.0,
            window: 0.5,
        }
    }
}

/// Provenance block written into manifests; ignored on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunMeta {
    pub version: String,
    pub command: String,
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config serialize error: {e}")))
    }

    /// Number of controlled outputs (the two-link plant fixes this at 2).
    pub fn output_dim(&self) -> usize {
        self.uncertainty.true_values.len()
    }

    pub fn true_uncertainty(&self) -> Result<UncertaintyMatrix> {
        UncertaintyMatrix::from_rows(&self.uncertainty.true_values)
    }

    pub fn layout(&self) -> Result<EstimateLayout> {
        let m = self.output_dim();
        let learned: Vec<bool> = self.uncertainty.learned.iter().flatten().copied().collect();
        let fixed: Vec<f64> = self.uncertainty.fixed.iter().flatten().copied().collect();
        EstimateLayout::new(m, learned, fixed)
    }

    pub fn gain_set(&self) -> Result<GainSet> {
        if self.gains.kp.len() != self.gains.kd.len() {
            return Err(Error::Config("kp and kd must have the same length".into()));
        }
        let pairs: Vec<(f64, f64)> = self
            .gains
            .kp
            .iter()
            .zip(&self.gains.kd)
            .map(|(&p, &d)| (p, d))
            .collect();
        GainSet::pd_pairs(&pairs)
    }

    pub fn reference(&self) -> Result<ReferenceTrajectory> {
        ReferenceTrajectory::per_channel(
            &self.reference.q_init,
            &self.reference.q_final,
            self.reference.duration,
        )
    }

    pub fn mes_params(&self) -> Result<MesParams> {
        let mut params = MesParams::new(
            self.estimator.mes.amplitudes.clone(),
            self.estimator.mes.frequencies.clone(),
            self.reference.duration,
        )?;
        params.amplitude_decay = self.estimator.mes.amplitude_decay;
        params.validate()?;
        Ok(params)
    }

    pub fn grid(&self) -> Result<SearchGrid> {
        SearchGrid::from_box(&self.estimator.gpucb.bounds, self.estimator.gpucb.resolution)
    }

    pub fn kernel(&self) -> Result<SquaredExpKernel> {
        SquaredExpKernel::new(self.estimator.gpucb.length_scale)
    }

    /// Both estimators start from the all-zero estimate.
    pub fn initial_estimate(&self) -> Result<Vec<f64>> {
        Ok(vec![0.0; self.layout()?.learned_count()])
    }

    pub fn episode_duration(&self) -> f64 {
        self.episode.duration.unwrap_or(self.reference.duration)
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;

        let m = self.output_dim();
        if m != 2 {
            return Err(Error::Config(format!(
                "the two-link plant needs a 2x2 uncertainty matrix, got {m} rows"
            )));
        }
        self.true_uncertainty()?;
        if self.uncertainty.learned.len() != m
            || self.uncertainty.learned.iter().any(|r| r.len() != m)
            || self.uncertainty.fixed.len() != m
            || self.uncertainty.fixed.iter().any(|r| r.len() != m)
        {
            return Err(Error::Config(
                "uncertainty.learned and uncertainty.fixed must be m x m".into(),
            ));
        }
        let layout = self.layout()?;

        if self.gains.kp.len() != m || self.gains.kd.len() != m {
            return Err(Error::Config(format!("need {m} kp and kd gains")));
        }
        // Gains must place stable poles; this also certifies the Lyapunov solve.
        ErrorSystem::from_gains(&self.gain_set()?)
            .map_err(|e| Error::Config(format!("gains: {e}")))?;

        if self.reference.q_init.len() != m || self.reference.q_final.len() != m {
            return Err(Error::Config(format!("reference vectors must have {m} entries")));
        }
        if !(self.reference.duration > 0.0) {
            return Err(Error::Config("reference duration must be positive".into()));
        }

        if !(self.episode.step > 0.0) {
            return Err(Error::Config("episode step must be positive".into()));
        }
        if let Some(d) = self.episode.duration {
            if !(d > 0.0) {
                return Err(Error::Config("episode duration must be positive".into()));
            }
        }
        if !(self.episode.blowup_bound > 0.0) {
            return Err(Error::Config("blow-up bound must be positive".into()));
        }
        for (name, field) in [
            ("initial_q", &self.episode.initial_q),
            ("initial_dq", &self.episode.initial_dq),
        ] {
            if let Some(v) = field {
                if v.len() != m || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Config(format!(
                        "episode.{name} must hold {m} finite entries"
                    )));
                }
            }
        }

        if self.cost.position_weights.len() != m || self.cost.velocity_weights.len() != m {
            return Err(Error::Config(format!("cost weights must have {m} entries")));
        }
        if self
            .cost
            .position_weights
            .iter()
            .chain(&self.cost.velocity_weights)
            .any(|w| !(*w > 0.0))
        {
            return Err(Error::Config("cost weights must be strictly positive".into()));
        }

        if self.estimator.iterations == 0 {
            return Err(Error::Config("iteration budget must be at least one".into()));
        }
        let learned = layout.learned_count();
        let mes = self.mes_params()?;
        if mes.dim() != learned {
            return Err(Error::Config(format!(
                "MES needs one amplitude/frequency pair per learned parameter ({learned})"
            )));
        }
        let gp = &self.estimator.gpucb;
        if gp.bounds.len() != learned {
            return Err(Error::Config(format!(
                "GP-UCB needs one box interval per learned parameter ({learned})"
            )));
        }
        let grid = self.grid()?;
        let start = self.initial_estimate()?;
        if !grid.contains(&start) {
            return Err(Error::Config(
                "search box must contain the initial (zero) estimate".into(),
            ));
        }
        self.kernel()?;
        if !(gp.noise_std > 0.0) {
            return Err(Error::Config("GP noise parameter must be positive".into()));
        }
        if !(gp.confidence > 0.0 && gp.confidence < 1.0) {
            return Err(Error::Config("confidence parameter must lie in (0, 1)".into()));
        }
        if gp.observation_noise < 0.0 || !gp.observation_noise.is_finite() {
            return Err(Error::Config("observation noise must be finite and >= 0".into()));
        }

        if self.sweep.norms.is_empty()
            || self.sweep.norms.iter().any(|n| !(*n >= 0.0) || !n.is_finite())
        {
            return Err(Error::Config("sweep norms must be non-negative and finite".into()));
        }
        if !(self.sweep.duration > 0.0) || !(self.sweep.window > 0.0) {
            return Err(Error::Config("sweep duration and window must be positive".into()));
        }
        if self.sweep.window > self.sweep.duration {
            return Err(Error::Config("sweep window cannot exceed its duration".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = Config::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.output_dim(), 2);
        assert_eq!(cfg.layout().unwrap().learned_count(), 2);
        assert_eq!(cfg.initial_estimate().unwrap(), vec![0.0, 0.0]);
        assert_eq!(cfg.grid().unwrap().len(), 51 * 51);
    }

    #[test]
    fn toml_round_trip_preserves_defaults() {
        let cfg = Config::default();
        let text = cfg.to_toml().unwrap();
        let back = Config::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = Config::from_toml("").unwrap();
        assert_eq!(cfg, Config::default());
    }

    #[test]
    fn partial_document_overrides_one_field() {
        let cfg = Config::from_toml("[episode]\nstep = 0.002\n").unwrap();
        assert_eq!(cfg.episode.step, 0.002);
        assert_eq!(cfg.gains.kp, vec![25.0, 25.0]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = Config::default();
        cfg.gains.kp = vec![-25.0, 25.0];
        assert!(cfg.validate().is_err());

        let mut cfg = Config::default();
        cfg.estimator.mes.frequencies = vec![3.0, 3.0];
        assert!(cfg.validate().is_err());

        let mut cfg = Config::default();
        cfg.estimator.gpucb.bounds = vec![(0.5, 1.0), (0.0, 1.0)];
        assert!(cfg.validate().is_err(), "box must contain the zero start");

        let mut cfg = Config::default();
        cfg.episode.step = 0.0;
        assert!(cfg.validate().is_err());

        let mut cfg = Config::default();
        cfg.cost.position_weights = vec![1.0, 0.0];
        assert!(cfg.validate().is_err());
    }
}
