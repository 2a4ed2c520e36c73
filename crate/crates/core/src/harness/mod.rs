//! Experiment orchestration: configuration, multi-seed runs, the
//! reward-engineering grid and the multiplier stability comparison.

pub mod config;
pub mod experiment;
pub mod grid;
pub mod plot;
pub mod pool;
pub mod presets;
pub mod stability;

pub use config::{GridSettings, Precision, RunConfig, StabilitySettings, BEHAVIORS, SUCCESS_BEHAVIOR};
pub use experiment::{
    evaluate_checkpoint, lambda_csv, run_experiment, summarize, summary_csv, ExperimentResult, SeedRun, SummaryRow,
    TrainJob,
};
pub use grid::{classify_feasible, run_cell, run_reward_engineering_grid, FeasibilityClass, GridCell, GridResult, GridSpec, PenalizedEnv};
pub use plot::{line_plot, HLine, Series};
pub use pool::run_jobs;
pub use stability::{run_stability_experiment, switch_step, StabilityResult};
