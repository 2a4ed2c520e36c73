//! Constrained reinforcement learning with behaviors expressed as rate constraints.
//!
//! Desired behaviors are written as indicator events with target rates. A
//! SAC-Lagrangian learner balances them against the task reward through
//! softmax-normalized multipliers and an optional bootstrap success
//! constraint. The crate also ships a small navigation arena, an exact
//! tabular CMDP oracle and the experiment harness used to compare against
//! reward engineering.

pub mod agent;
pub mod arena;
pub mod buffer;
pub mod env;
pub mod error;
pub mod eval;
pub mod harness;
pub mod events;
pub mod multipliers;
pub mod neural;
pub mod oracle;
pub mod scalar;
pub mod seeding;

pub use error::{Error, Result};
pub use events::{invert_indicator, Bound, ConstraintSet, ConstraintSpec, EventVector, Indicator};
pub use scalar::Scalar;

/// Single-precision aliases, the default for training.
pub type Agent32 = agent::Agent<f32>;
pub type Mlp32 = neural::Mlp<f32>;
pub type GaussianPolicy32 = neural::GaussianPolicy<f32>;
pub type Multipliers32 = multipliers::Multipliers<f32>;
pub type ArenaTrainer32 = agent::Trainer<f32, arena::ArenaEnv>;

/// Double-precision aliases, used by gradient checks and reference runs.
pub type Agent64 = agent::Agent<f64>;
pub type Mlp64 = neural::Mlp<f64>;
pub type GaussianPolicy64 = neural::GaussianPolicy<f64>;
pub type Multipliers64 = multipliers::Multipliers<f64>;
pub type ArenaTrainer64 = agent::Trainer<f64, arena::ArenaEnv>;
