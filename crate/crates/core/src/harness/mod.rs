//! Episode execution, outer learning loops, configuration and persistence.

pub mod config;
pub mod episode;
pub mod export;
pub mod learning;
pub mod sweep;

pub use config::{Config, EstimatorKind};
pub use episode::{run_episode, run_episode_with_duration, EpisodeResult};
pub use learning::{learn_gpucb, learn_mes, IterationRecord, LearningTrace};
pub use sweep::{episode_costs, run_episode_batch, sweep, SweepPoint};
