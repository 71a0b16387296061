//! CSV and manifest persistence.
//!
//! Headers are fixed contracts consumed by external plotting; values print via
//! the shortest round-trip float formatting, so identical runs produce
//! byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use super::config::{Config, RunMeta};
use super::episode::EpisodeResult;
use super::learning::LearningTrace;
use super::sweep::SweepPoint;
use crate::error::{Error, Result};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|source| Error::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-step closed-loop log: `t,q1,q2,dq1,dq2,q1d,q2d,dq1d,dq2d,tau1,tau2,V`.
pub fn trajectory_csv(episode: &EpisodeResult) -> String {
    let mut out = String::new();
    out.push_str("t,q1,q2,dq1,dq2,q1d,q2d,dq1d,dq2d,tau1,tau2,V\n");
    for k in 0..episode.time.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            episode.time[k],
            episode.q[k][0],
            episode.q[k][1],
            episode.dq[k][0],
            episode.dq[k][1],
            episode.q_ref[k][0],
            episode.q_ref[k][1],
            episode.dq_ref[k][0],
            episode.dq_ref[k][1],
            episode.torque[k][0],
            episode.torque[k][1],
            episode.lyapunov_value[k],
        );
    }
    out
}

pub fn write_trajectory_csv(path: &Path, episode: &EpisodeResult) -> Result<()> {
    write_file(path, &trajectory_csv(episode))
}

/// Per-iteration learning log: `iter,J,Jmin,dhat1,...[,regret,cumregret]`.
pub fn learning_csv(trace: &LearningTrace) -> String {
    let dim = trace
        .records
        .first()
        .map(|r| r.estimate.len())
        .unwrap_or(0);
    let with_regret = trace.has_regret();
    let mut out = String::from("iter,J,Jmin");
    for i in 1..=dim {
        let _ = write!(out, ",dhat{i}");
    }
    if with_regret {
        out.push_str(",regret,cumregret");
    }
    out.push('\n');
    for r in &trace.records {
        let _ = write!(out, "{},{},{}", r.iteration, r.cost, r.running_min);
        for v in &r.estimate {
            let _ = write!(out, ",{v}");
        }
        if with_regret {
            let _ = write!(
                out,
                ",{},{}",
                r.regret.unwrap_or(f64::NAN),
                r.cumulative_regret.unwrap_or(f64::NAN)
            );
        }
        out.push('\n');
    }
    out
}

pub fn write_learning_csv(path: &Path, trace: &LearningTrace) -> Result<()> {
    write_file(path, &learning_csv(trace))
}

/// Steady-state study log: `enorm,zss,zpeak`.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("enorm,zss,zpeak\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.error_norm, p.steady_state_error, p.peak_error);
    }
    out
}

pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    write_file(path, &sweep_csv(points))
}

/// Resolved config plus provenance; feeding the manifest back as `--config`
/// reproduces the run exactly.
pub fn manifest_string(cfg: &Config, command: &str) -> Result<String> {
    let mut stamped = cfg.clone();
    stamped.meta = Some(RunMeta {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
    });
    stamped.to_toml()
}

pub fn write_manifest(path: &Path, cfg: &Config, command: &str) -> Result<()> {
    write_file(path, &manifest_string(cfg, command)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::episode::run_episode;
    use crate::harness::learning::learn_mes;

    #[test]
    fn trajectory_csv_shape() {
        let mut cfg = Config::default();
        cfg.episode.duration = Some(0.5);
        let ep = run_episode(&[0.0, 0.0], &cfg).unwrap();
        let csv = trajectory_csv(&ep);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,q1,q2,dq1,dq2,q1d,q2d,dq1d,dq2d,tau1,tau2,V"
        );
        // floor(0.5 / 1e-3) + 1 data rows.
        assert_eq!(csv.lines().count(), 1 + 501);
        assert!(lines.next().unwrap().starts_with("0,"));
    }

    #[test]
    fn learning_csv_headers_and_monotone_min() {
        let mut cfg = Config::default();
        cfg.estimator.iterations = 8;
        let trace = learn_mes(&cfg).unwrap();
        let csv = learning_csv(&trace);
        assert!(csv.starts_with("iter,J,Jmin,dhat1,dhat2\n"));
        let mins: Vec<f64> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
            .collect();
        assert!(mins.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn identical_runs_are_byte_identical() {
        let mut cfg = Config::default();
        cfg.estimator.iterations = 5;
        let a = learning_csv(&learn_mes(&cfg).unwrap());
        let b = learning_csv(&learn_mes(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn manifest_reloads_as_the_same_config() {
        let cfg = Config::default();
        let manifest = manifest_string(&cfg, "learn-mes").unwrap();
        let reloaded = Config::from_toml(&manifest).unwrap();
        assert_eq!(reloaded.meta.as_ref().unwrap().command, "learn-mes");
        let mut stripped = reloaded;
        stripped.meta = None;
        assert_eq!(stripped, cfg);
    }

    #[test]
    fn files_land_in_created_directories() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/run/sweep.csv");
        write_sweep_csv(
            &path,
            &[SweepPoint {
                error_norm: 0.1,
                steady_state_error: 0.01,
                peak_error: 0.02,
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(text, "enorm,zss,zpeak\n0.1,0.01,0.02\n");
    }
}
