//! Named starting points for [`RunConfig`].
//!
//! `arena_full` and `openworld_full` carry the full-scale hyperparameters.
//! The `desk*` presets are the scaled-down runs used for everyday work and
//! the acceptance suite: a 4 m arena, 60-step episodes and 64-unit networks.

use std::path::PathBuf;

use super::config::{GridSettings, Precision, RunConfig, StabilitySettings};
use crate::agent::{TrainerConfig, Variant};
use crate::arena::ArenaConfig;
use crate::multipliers::MultiplierMode;

pub const NAMES: &[&str] = &[
    "desk",
    "desk_unconstrained",
    "desk_ablation",
    "desk_td3",
    "desk_stability",
    "desk_grid1",
    "desk_grid2",
    "arena_full",
    "openworld_full",
];

pub fn by_name(name: &str) -> Option<RunConfig> {
    Some(match name {
        "desk" => desk(),
        "desk_unconstrained" => desk_unconstrained(),
        "desk_ablation" => desk_ablation(),
        "desk_td3" => desk_td3(),
        "desk_stability" => desk_stability(),
        "desk_grid1" => desk_grid(&["in_lava"]),
        "desk_grid2" => desk_grid(&["in_lava", "not_looking_at_marker"]),
        "arena_full" => arena_full(),
        "openworld_full" => openworld_full(),
        _ => return None,
    })
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn base(name: &str, arena: ArenaConfig, trainer: TrainerConfig) -> RunConfig {
    RunConfig {
        name: name.to_string(),
        preset: name.to_string(),
        arena,
        trainer,
        active: vec![],
        tracked: vec![],
        thresholds: vec![],
        seeds: vec![1, 2, 3, 4, 5],
        precision: Precision::F32,
        out_dir: PathBuf::from("runs").join(name),
        stability: StabilitySettings { switch_fraction: 0.75, feasible_threshold: 0.6 },
        grid: GridSettings {
            behaviors: vec![],
            weights: vec![0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0],
            performance_floor: 0.8,
            eval_episodes: 100,
        },
    }
}

/// Trainer settings shared by every desk preset.
pub fn desk_trainer() -> TrainerConfig {
    TrainerConfig {
        batch_size: 128,
        update_every: 50,
        gradient_steps: 25,
        random_steps: 2000,
        warmup_steps: 1000,
        lr: 1e-3,
        multiplier_every: 1000,
        multiplier_batch: 1000,
        multiplier_lr: 0.03,
        eval_every: 5000,
        eval_episodes: 20,
        total_steps: 150_000,
        policy_hidden: vec![64, 64],
        critic_hidden: vec![64, 64],
        buffer_capacity: 500_000,
        ..TrainerConfig::default()
    }
}

/// Two constraints (lava, not looking at the marker) plus the bootstrapped
/// success constraint.
pub fn desk() -> RunConfig {
    let mut c = base("desk", ArenaConfig::desk(), desk_trainer());
    c.active = names(&["in_lava", "not_looking_at_marker", "reached_goal"]);
    c.tracked = names(&["in_lava", "not_looking_at_marker"]);
    c
}

/// Plain SAC on the lava-free desk arena.
pub fn desk_unconstrained() -> RunConfig {
    let mut c = base(
        "desk_unconstrained",
        ArenaConfig::desk().without_lava(),
        TrainerConfig { total_steps: 60_000, success_enabled: false, bootstrap: false, ..desk_trainer() },
    );
    c.tracked = names(&["not_looking_at_marker"]);
    c
}

/// [`desk`] without the success constraint and without bootstrapping.
pub fn desk_ablation() -> RunConfig {
    let mut c = desk();
    c.name = "desk_ablation".into();
    c.preset = c.name.clone();
    c.out_dir = PathBuf::from("runs/desk_ablation");
    c.trainer.bootstrap = false;
    c.trainer.success_enabled = false;
    c
}

pub fn desk_td3() -> RunConfig {
    let mut c = desk();
    c.name = "desk_td3".into();
    c.preset = c.name.clone();
    c.out_dir = PathBuf::from("runs/desk_td3");
    c.trainer.variant = Variant::Td3;
    c
}

/// A single impossible constraint (never touch the ground) that is relaxed
/// to a feasible one late in the run. Multipliers are refreshed every 100
/// steps with a larger step size. Jumping keeps the agent airborne at most
/// four steps in five, so the violation never drops below 0.2 and the
/// unnormalized multiplier gains at least 0.02 per update.
pub fn desk_stability() -> RunConfig {
    let mut c = base(
        "desk_stability",
        ArenaConfig::desk().without_lava(),
        TrainerConfig {
            total_steps: 100_000,
            multiplier_every: 100,
            multiplier_batch: 100,
            multiplier_lr: 0.1,
            bootstrap: false,
            success_enabled: false,
            ..desk_trainer()
        },
    );
    c.active = names(&["on_ground"]);
    c.tracked = names(&["on_ground"]);
    c.thresholds = vec![("on_ground".into(), 0.0)];
    c.stability.feasible_threshold = 0.6;
    c
}

/// Reward-engineering grid over the given behaviors.
pub fn desk_grid(behaviors: &[&str]) -> RunConfig {
    let name = format!("desk_grid{}", behaviors.len());
    let mut c = base(
        &name,
        ArenaConfig::desk(),
        TrainerConfig { total_steps: 30_000, success_enabled: false, bootstrap: false, ..desk_trainer() },
    );
    c.tracked = names(behaviors);
    c.grid.behaviors = names(behaviors);
    c.grid.weights = vec![0.1, 0.3, 1.0, 3.0, 10.0];
    c
}

/// Full-scale arena with all five behaviors and the bootstrapped success
/// constraint.
pub fn arena_full() -> RunConfig {
    let mut c = base(
        "arena_full",
        ArenaConfig::default(),
        TrainerConfig { total_steps: 10_000_000, ..TrainerConfig::default() },
    );
    let five = ["not_looking_at_marker", "not_on_ground", "in_lava", "above_speed_limit", "under_energy_floor"];
    c.active = names(&five);
    c.active.push("reached_goal".into());
    c.tracked = names(&five);
    c.grid.eval_episodes = 1000;
    c
}

/// Hyperparameters of the larger 3D navigation setup, applied to the arena.
pub fn openworld_full() -> RunConfig {
    let trainer = TrainerConfig {
        gamma: 0.99,
        gamma_constraint: 0.99,
        alpha: 0.005,
        tau: 0.005,
        update_every: 1,
        gradient_steps: 1,
        batch_size: 2560,
        multiplier_every: 1,
        multiplier_batch: 5000,
        random_steps: 200,
        warmup_steps: 2560,
        lr: 1e-4,
        multiplier_lr: 5e-5,
        initial_multiplier: 0.02,
        total_steps: 10_000_000,
        policy_hidden: vec![1024, 1024, 1024],
        critic_hidden: vec![1024, 1024, 1024],
        buffer_capacity: 4_000_000,
        multiplier_mode: MultiplierMode::Normalized,
        ..TrainerConfig::default()
    };
    let mut c = base("openworld_full", ArenaConfig::default(), trainer);
    let four = ["not_looking_at_marker", "not_on_ground", "in_lava", "under_energy_floor"];
    c.active = names(&four);
    c.active.push("reached_goal".into());
    c.tracked = names(&four);
    c.thresholds = vec![("in_lava".into(), 0.001), ("reached_goal".into(), 0.80)];
    c
}
