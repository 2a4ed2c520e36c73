//! Lagrangian actor-critic learners and their training loop.

mod checkpoint;
mod config;
mod learner;
mod metrics;
mod plain;
mod trainer;

pub use checkpoint::{config_hash, load_checkpoint, save_checkpoint, BUNDLE_FILE, MANIFEST_FILE};
pub use config::{Td3Params, ThresholdSwitch, TrainerConfig, Variant};
pub use learner::{ActMode, Actor, Agent, NextActions, RoundStats};
pub use metrics::{metrics_csv, MetricsRow, MetricsSchema};
pub use plain::train_plain_sac;
pub use trainer::{episode_seed, eval_seeds, uniform_action, LambdaPoint, Trainer};
