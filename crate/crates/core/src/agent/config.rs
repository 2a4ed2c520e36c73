use crate::error::{Error, Result};
use crate::multipliers::MultiplierMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Sac,
    Td3,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Sac => "sac",
            Variant::Td3 => "td3",
        }
    }
}

/// Deterministic-actor settings.
#[derive(Clone, Debug, PartialEq)]
pub struct Td3Params {
    /// Std of the target-policy smoothing noise.
    pub target_noise: f64,
    pub noise_clip: f64,
    /// Critic rounds per actor update.
    pub policy_delay: u64,
    /// Std of the Gaussian noise added to behavior actions.
    pub exploration_noise: f64,
}

impl Default for Td3Params {
    fn default() -> Self {
        Self { target_noise: 0.2, noise_clip: 0.5, policy_delay: 2, exploration_noise: 0.1 }
    }
}

/// Replaces the threshold of one multiplier slot once `step` environment
/// steps have been taken.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSwitch {
    pub step: u64,
    pub slot: usize,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig {
    pub gamma: f64,
    /// Discount of the constraint critics.
    pub gamma_constraint: f64,
    /// Fixed entropy coefficient.
    pub alpha: f64,
    pub tau: f64,
    /// Environment steps between update rounds.
    pub update_every: u64,
    /// Gradient steps per update round.
    pub gradient_steps: u64,
    pub batch_size: usize,
    /// Environment steps between multiplier updates.
    pub multiplier_every: u64,
    /// Number of most recent transitions used to estimate behavior rates.
    pub multiplier_batch: usize,
    pub random_steps: u64,
    /// No gradient updates before this many transitions are stored.
    pub warmup_steps: u64,
    pub lr: f64,
    pub multiplier_lr: f64,
    /// Initial logit `z` (normalized) or initial multiplier (unnormalized).
    pub initial_multiplier: f64,
    pub total_steps: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub variant: Variant,
    pub bootstrap: bool,
    pub success_enabled: bool,
    pub multiplier_mode: MultiplierMode,
    pub entropy_in_constraint_targets: bool,
    pub policy_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub buffer_capacity: usize,
    pub td3: Td3Params,
    pub threshold_switch: Option<ThresholdSwitch>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            gamma_constraint: 0.9,
            alpha: 0.02,
            tau: 0.005,
            update_every: 200,
            gradient_steps: 200,
            batch_size: 256,
            multiplier_every: 2000,
            multiplier_batch: 2000,
            random_steps: 10_000,
            warmup_steps: 2560,
            lr: 3e-4,
            multiplier_lr: 0.03,
            initial_multiplier: 0.02,
            total_steps: 300_000,
            eval_every: 20_000,
            eval_episodes: 10,
            variant: Variant::Sac,
            bootstrap: true,
            success_enabled: true,
            multiplier_mode: MultiplierMode::Normalized,
            entropy_in_constraint_targets: true,
            policy_hidden: vec![256, 256],
            critic_hidden: vec![256, 256],
            buffer_capacity: 1_000_000,
            td3: Td3Params::default(),
            threshold_switch: None,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [("gamma", self.gamma), ("gamma_constraint", self.gamma_constraint)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} {v} outside (0, 1)"));
            }
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", self.tau));
        }
        for (name, v) in [("alpha", self.alpha), ("lr", self.lr), ("multiplier_lr", self.multiplier_lr)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        for (name, v) in [
            ("update_every", self.update_every),
            ("multiplier_every", self.multiplier_every),
            ("eval_every", self.eval_every),
            ("td3.policy_delay", self.td3.policy_delay),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("multiplier_batch", self.multiplier_batch),
            ("eval_episodes", self.eval_episodes),
            ("buffer_capacity", self.buffer_capacity),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.batch_size > self.buffer_capacity || self.multiplier_batch > self.buffer_capacity {
            return bad("batch sizes cannot exceed the buffer capacity".into());
        }
        if self.policy_hidden.is_empty() || self.critic_hidden.is_empty() || self.policy_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("hidden layer lists must be non-empty and positive".into());
        }
        if let Some(sw) = &self.threshold_switch {
            if !(0.0..=1.0).contains(&sw.threshold) {
                return bad(format!("switched threshold {} outside [0, 1]", sw.threshold));
            }
        }
        Ok(())
    }

    /// Stable textual form used for fingerprints.
    pub fn canonical(&self) -> String {
        format!("{self:?}")
    }
}
