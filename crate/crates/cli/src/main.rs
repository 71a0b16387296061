//! `modac` — closed-loop simulation and learning for the two-link arm.
//!
//! Every run writes a `manifest.toml` with the fully resolved configuration;
//! passing that manifest back via `--config` reproduces the run byte for byte.
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use modac_core::harness::{
    export, learn_gpucb, learn_mes, run_episode, sweep, Config, EstimatorKind, LearningTrace,
};
use modac_core::{Error, Result};

#[derive(Parser)]
#[command(name = "modac", version, about = "Learning-based adaptive control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonOpts {
    /// Configuration file (TOML); built-in defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the learning iteration budget.
    #[arg(long, global = true)]
    iters: Option<usize>,
    /// Override the integrator step (seconds).
    #[arg(long, global = true)]
    step: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop episode with a fixed uncertainty estimate.
    Simulate {
        #[command(flatten)]
        common: CommonOpts,
        /// Learned estimate values, comma separated (defaults to zeros).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        dhat: Option<Vec<f64>>,
    },
    /// Estimate the uncertainty online with extremum seeking.
    LearnMes {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Estimate the uncertainty online with GP-UCB over the search grid.
    LearnGpucb {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Steady-state tracking error for a range of held estimate errors.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Inspect the resolved configuration.
    Config {
        #[command(flatten)]
        common: CommonOpts,
        /// Print the resolved configuration as TOML.
        #[arg(long)]
        dump: bool,
    },
}

fn load_config(common: &CommonOpts) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::from_path(path)?,
        None => Config::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.run.out_dir = out.clone();
    }
    if let Some(iters) = common.iters {
        cfg.estimator.iterations = iters;
    }
    if let Some(step) = common.step {
        cfg.episode.step = step;
    }
    Ok(cfg)
}

fn finish_learning(cfg: &Config, trace: &LearningTrace, command: &str) -> Result<()> {
    let out = &cfg.run.out_dir;
    export::write_learning_csv(&out.join("learning.csv"), trace)?;
    // Re-run the final estimate so the recovered tracking can be plotted.
    let final_episode = run_episode(&trace.final_estimate, cfg)?;
    export::write_trajectory_csv(&out.join("final_episode.csv"), &final_episode)?;
    export::write_manifest(&out.join("manifest.toml"), cfg, command)?;

    let last = trace.records.last().expect("at least one iteration");
    println!(
        "{command}: {} iterations, J0 = {:.6e}, running-min J = {:.6e}",
        trace.records.len(),
        trace.records[0].cost,
        last.running_min
    );
    let estimate: Vec<String> = trace.final_estimate.iter().map(|v| format!("{v:.6}")).collect();
    println!("final estimate: [{}]", estimate.join(", "));
    println!(
        "final-estimate episode J = {:.6e}{}",
        final_episode.cost,
        if final_episode.failed { " (failed)" } else { "" }
    );
    println!("outputs in {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, dhat } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let estimate = match dhat {
                Some(values) => values,
                None => cfg.initial_estimate()?,
            };
            let episode = run_episode(&estimate, &cfg)?;
            let out = &cfg.run.out_dir;
            export::write_trajectory_csv(&out.join("trajectory.csv"), &episode)?;
            export::write_manifest(&out.join("manifest.toml"), &cfg, "simulate")?;
            println!(
                "simulate: J = {:.6e}, max |z| = {:.6e}, estimate error |e| = {:.6e}",
                episode.cost,
                episode.max_error_norm(),
                episode.estimate_error_norm
            );
            println!("outputs in {}", out.display());
            if episode.failed {
                return Err(Error::Numerical(
                    episode.failure.unwrap_or_else(|| "episode failed".into()),
                ));
            }
            Ok(())
        }
        Command::LearnMes { common } => {
            let mut cfg = load_config(&common)?;
            cfg.estimator.kind = EstimatorKind::Mes;
            cfg.validate()?;
            let trace = learn_mes(&cfg)?;
            println!(
                "dither radius sqrt(sum a_i^2) = {:.6}",
                cfg.mes_params()?.dither_radius()
            );
            finish_learning(&cfg, &trace, "learn-mes")
        }
        Command::LearnGpucb { common } => {
            let mut cfg = load_config(&common)?;
            cfg.estimator.kind = EstimatorKind::Gpucb;
            cfg.validate()?;
            let trace = learn_gpucb(&cfg)?;
            finish_learning(&cfg, &trace, "learn-gpucb")
        }
        Command::Sweep { common } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            let points = sweep(&cfg)?;
            let out = &cfg.run.out_dir;
            export::write_sweep_csv(&out.join("sweep.csv"), &points)?;
            export::write_manifest(&out.join("manifest.toml"), &cfg, "sweep")?;
            for p in &points {
                println!(
                    "|e| = {:<6} steady-state |z| = {:.6e}  peak |z| = {:.6e}",
                    p.error_norm, p.steady_state_error, p.peak_error
                );
            }
            println!("outputs in {}", out.display());
            Ok(())
        }
        Command::Config { common, dump } => {
            let cfg = load_config(&common)?;
            cfg.validate()?;
            if dump {
                print!("{}", cfg.to_toml()?);
            } else {
                println!("configuration is valid; use --dump to print it");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
