//! Flat `section.key = value` run configuration.
//!
//! Lines starting with `#` and blank lines are ignored. `experiment.preset`
//! selects the starting point and is applied before every other key,
//! wherever it appears. Unknown keys are errors.

use std::fmt::Write;
use std::path::PathBuf;

use super::presets;
use crate::agent::{TrainerConfig, Variant};
use crate::arena::{self, ArenaConfig, Rect};
use crate::error::{Error, Result};
use crate::events::{ConstraintSet, ConstraintSpec, Indicator};
use crate::multipliers::MultiplierMode;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilitySettings {
    /// Fraction of the run after which the threshold is relaxed.
    pub switch_fraction: f64,
    /// Threshold used after the switch.
    pub feasible_threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSettings {
    /// Behaviors penalized in the reward, one weight axis each.
    pub behaviors: Vec<String>,
    /// Penalty weights tried on every axis.
    pub weights: Vec<f64>,
    pub performance_floor: f64,
    /// Episodes of the final evaluation of each cell.
    pub eval_episodes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub preset: String,
    pub arena: ArenaConfig,
    pub trainer: TrainerConfig,
    /// Names of enforced behaviors; `reached_goal` becomes the success slot.
    pub active: Vec<String>,
    /// Names of behaviors whose rates are reported.
    pub tracked: Vec<String>,
    /// Threshold overrides by behavior name.
    pub thresholds: Vec<(String, f64)>,
    pub seeds: Vec<u64>,
    pub precision: Precision,
    pub out_dir: PathBuf,
    pub stability: StabilitySettings,
    pub grid: GridSettings,
}

/// Behaviors known by name, with their default thresholds.
pub const BEHAVIORS: &[(&str, Option<f64>)] = &[
    ("not_looking_at_marker", Some(0.10)),
    ("not_on_ground", Some(0.40)),
    ("on_ground", None),
    ("in_lava", Some(0.01)),
    ("above_speed_limit", Some(0.01)),
    ("under_energy_floor", Some(0.01)),
    ("reached_goal", Some(0.99)),
];

pub const SUCCESS_BEHAVIOR: &str = "reached_goal";

fn indicator(name: &str) -> Option<Indicator> {
    Some(match name {
        "not_looking_at_marker" => Indicator::direct(arena::NOT_LOOKING),
        "not_on_ground" => Indicator::direct(arena::NOT_ON_GROUND),
        "on_ground" => Indicator::inverted(arena::NOT_ON_GROUND),
        "in_lava" => Indicator::direct(arena::IN_LAVA),
        "above_speed_limit" => Indicator::direct(arena::ABOVE_SPEED_LIMIT),
        "under_energy_floor" => Indicator::direct(arena::UNDER_ENERGY),
        "reached_goal" => Indicator::direct(arena::REACHED_GOAL),
        _ => return None,
    })
}

impl RunConfig {
    pub fn threshold(&self, name: &str) -> Result<f64> {
        if let Some((_, t)) = self.thresholds.iter().find(|(n, _)| n == name) {
            return Ok(*t);
        }
        BEHAVIORS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Config(format!("unknown behavior {name:?}")))?
            .1
            .ok_or_else(|| Error::Config(format!("behavior {name:?} needs an explicit threshold")))
    }

    pub fn spec(&self, name: &str) -> Result<ConstraintSpec> {
        let ind = indicator(name).ok_or_else(|| Error::Config(format!("unknown behavior {name:?}")))?;
        let t = self.threshold(name)?;
        let spec = if name == SUCCESS_BEHAVIOR {
            ConstraintSpec::lower(name, t, ind)
        } else {
            ConstraintSpec::upper(name, t, ind)
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn constraint_set(&self) -> Result<ConstraintSet> {
        let mut behaviors = Vec::new();
        let mut success = None;
        for name in &self.active {
            if name == SUCCESS_BEHAVIOR {
                success = Some(self.spec(name)?);
            } else {
                behaviors.push(self.spec(name)?);
            }
        }
        ConstraintSet::new(behaviors, success)
    }

    pub fn tracked_specs(&self) -> Result<Vec<ConstraintSpec>> {
        self.tracked.iter().map(|n| self.spec(n)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        self.arena.validate()?;
        self.trainer.validate()?;
        self.constraint_set()?;
        self.tracked_specs()?;
        if !(0.0..=1.0).contains(&self.stability.switch_fraction) {
            return Err(Error::Config("stability.switch_fraction outside [0, 1]".into()));
        }
        if self.grid.weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("grid weights must be non-negative".into()));
        }
        Ok(())
    }

    /// Parses a configuration file body.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: "expected `section.key = value`".into() })?;
            entries.push((i + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let preset = entries
            .iter()
            .rev()
            .find(|(_, k, _)| k == "experiment.preset")
            .map(|(l, _, v)| (*l, v.clone()));
        let mut cfg = match preset {
            Some((line, name)) => {
                presets::by_name(&name).ok_or_else(|| Error::Parse { line, msg: format!("unknown preset {name:?}") })?
            }
            None => presets::desk(),
        };
        for (line, k, v) in &entries {
            cfg.set(k, v).map_err(|e| Error::Parse { line: *line, msg: e.to_string() })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let a = &mut self.arena;
        let t = &mut self.trainer;
        match key {
            "experiment.preset" => self.preset = value.to_string(),
            "experiment.name" => self.name = value.to_string(),
            "experiment.seeds" => self.seeds = parse_list(value, parse_u64)?,
            "experiment.precision" => {
                self.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(Error::Config(format!("precision must be f32 or f64, got {value:?}"))),
                }
            }
            "experiment.out_dir" => self.out_dir = PathBuf::from(value),

            "arena.half_extent" => a.half_extent = parse_f64(value)?,
            "arena.max_steps" => a.max_steps = parse_u64(value)? as u32,
            "arena.goal_radius" => a.goal_radius = parse_f64(value)?,
            "arena.marker" => {
                let v = parse_list(value, parse_f64)?;
                if v.len() != 2 {
                    return Err(Error::Config("arena.marker takes `x, z`".into()));
                }
                a.marker_position = [v[0], v[1]];
            }
            "arena.fov_half_angle" => a.fov_half_angle = parse_f64(value)?,
            "arena.max_speed" => a.max_speed = parse_f64(value)?,
            "arena.max_yaw" => a.max_yaw = parse_f64(value)?,
            "arena.speed_limit" => a.speed_limit = parse_f64(value)?,
            "arena.energy_drain" => a.energy_drain = parse_f64(value)?,
            "arena.energy_recharge" => a.energy_recharge = parse_f64(value)?,
            "arena.energy_floor" => a.energy_floor = parse_f64(value)?,
            "arena.jump_duration" => a.jump_duration = parse_u64(value)? as u32,
            "arena.shaping_scale" => a.shaping_scale = parse_f64(value)?,
            "arena.lava" => a.lava_rects = parse_rects(value)?,

            "trainer.gamma" => t.gamma = parse_f64(value)?,
            "trainer.gamma_constraint" => t.gamma_constraint = parse_f64(value)?,
            "trainer.alpha" => t.alpha = parse_f64(value)?,
            "trainer.tau" => t.tau = parse_f64(value)?,
            "trainer.update_every" => t.update_every = parse_u64(value)?,
            "trainer.gradient_steps" => t.gradient_steps = parse_u64(value)?,
            "trainer.batch_size" => t.batch_size = parse_u64(value)? as usize,
            "trainer.multiplier_every" => t.multiplier_every = parse_u64(value)?,
            "trainer.multiplier_batch" => t.multiplier_batch = parse_u64(value)? as usize,
            "trainer.random_steps" => t.random_steps = parse_u64(value)?,
            "trainer.warmup_steps" => t.warmup_steps = parse_u64(value)?,
            "trainer.lr" => t.lr = parse_f64(value)?,
            "trainer.multiplier_lr" => t.multiplier_lr = parse_f64(value)?,
            "trainer.initial_multiplier" => t.initial_multiplier = parse_f64(value)?,
            "trainer.total_steps" => t.total_steps = parse_u64(value)?,
            "trainer.eval_every" => t.eval_every = parse_u64(value)?,
            "trainer.eval_episodes" => t.eval_episodes = parse_u64(value)? as usize,
            "trainer.variant" => {
                t.variant = match value {
                    "sac" => Variant::Sac,
                    "td3" => Variant::Td3,
                    _ => return Err(Error::Config(format!("variant must be sac or td3, got {value:?}"))),
                }
            }
            "trainer.bootstrap" => t.bootstrap = parse_bool(value)?,
            "trainer.success_enabled" => t.success_enabled = parse_bool(value)?,
            "trainer.multiplier_mode" => {
                t.multiplier_mode = match value {
                    "normalized" => MultiplierMode::Normalized,
                    "unnormalized" => MultiplierMode::Unnormalized,
                    _ => return Err(Error::Config(format!("unknown multiplier mode {value:?}"))),
                }
            }
            "trainer.entropy_in_constraint_targets" => t.entropy_in_constraint_targets = parse_bool(value)?,
            "trainer.policy_hidden" => t.policy_hidden = parse_list(value, |s| Ok(parse_u64(s)? as usize))?,
            "trainer.critic_hidden" => t.critic_hidden = parse_list(value, |s| Ok(parse_u64(s)? as usize))?,
            "trainer.buffer_capacity" => t.buffer_capacity = parse_u64(value)? as usize,

            "td3.target_noise" => t.td3.target_noise = parse_f64(value)?,
            "td3.noise_clip" => t.td3.noise_clip = parse_f64(value)?,
            "td3.policy_delay" => t.td3.policy_delay = parse_u64(value)?,
            "td3.exploration_noise" => t.td3.exploration_noise = parse_f64(value)?,

            "constraints.active" => self.active = parse_names(value)?,
            "report.track" => self.tracked = parse_names(value)?,

            "stability.switch_fraction" => self.stability.switch_fraction = parse_f64(value)?,
            "stability.feasible_threshold" => self.stability.feasible_threshold = parse_f64(value)?,

            "grid.behaviors" => self.grid.behaviors = parse_names(value)?,
            "grid.weights" => self.grid.weights = parse_list(value, parse_f64)?,
            "grid.performance_floor" => self.grid.performance_floor = parse_f64(value)?,
            "grid.eval_episodes" => self.grid.eval_episodes = parse_u64(value)? as usize,

            _ => {
                if let Some(name) = key.strip_prefix("thresholds.") {
                    if indicator(name).is_none() {
                        return Err(Error::Config(format!("unknown behavior {name:?}")));
                    }
                    let v = parse_f64(value)?;
                    match self.thresholds.iter_mut().find(|(n, _)| n == name) {
                        Some(entry) => entry.1 = v,
                        None => self.thresholds.push((name.to_string(), v)),
                    }
                } else {
                    return Err(Error::Config(format!("unknown key {key:?}")));
                }
            }
        }
        Ok(())
    }

    /// Every key with its current value, in a form [`RunConfig::parse`] reads back.
    pub fn render(&self) -> String {
        let a = &self.arena;
        let t = &self.trainer;
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("experiment.preset", self.preset.clone());
        kv("experiment.name", self.name.clone());
        kv("experiment.seeds", self.seeds.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "));
        kv("experiment.precision", match self.precision { Precision::F32 => "f32", Precision::F64 => "f64" }.into());
        kv("experiment.out_dir", self.out_dir.display().to_string());
        kv("arena.half_extent", format!("{:?}", a.half_extent));
        kv("arena.max_steps", a.max_steps.to_string());
        kv("arena.goal_radius", format!("{:?}", a.goal_radius));
        kv("arena.marker", format!("{:?}, {:?}", a.marker_position[0], a.marker_position[1]));
        kv("arena.fov_half_angle", format!("{:?}", a.fov_half_angle));
        kv("arena.max_speed", format!("{:?}", a.max_speed));
        kv("arena.max_yaw", format!("{:?}", a.max_yaw));
        kv("arena.speed_limit", format!("{:?}", a.speed_limit));
        kv("arena.energy_drain", format!("{:?}", a.energy_drain));
        kv("arena.energy_recharge", format!("{:?}", a.energy_recharge));
        kv("arena.energy_floor", format!("{:?}", a.energy_floor));
        kv("arena.jump_duration", a.jump_duration.to_string());
        kv("arena.shaping_scale", format!("{:?}", a.shaping_scale));
        kv(
            "arena.lava",
            if a.lava_rects.is_empty() {
                "none".into()
            } else {
                a.lava_rects
                    .iter()
                    .map(|r| format!("{:?}, {:?}, {:?}, {:?}", r.x0, r.z0, r.x1, r.z1))
                    .collect::<Vec<_>>()
                    .join("; ")
            },
        );
        kv("trainer.gamma", format!("{:?}", t.gamma));
        kv("trainer.gamma_constraint", format!("{:?}", t.gamma_constraint));
        kv("trainer.alpha", format!("{:?}", t.alpha));
        kv("trainer.tau", format!("{:?}", t.tau));
        kv("trainer.update_every", t.update_every.to_string());
        kv("trainer.gradient_steps", t.gradient_steps.to_string());
        kv("trainer.batch_size", t.batch_size.to_string());
        kv("trainer.multiplier_every", t.multiplier_every.to_string());
        kv("trainer.multiplier_batch", t.multiplier_batch.to_string());
        kv("trainer.random_steps", t.random_steps.to_string());
        kv("trainer.warmup_steps", t.warmup_steps.to_string());
        kv("trainer.lr", format!("{:?}", t.lr));
        kv("trainer.multiplier_lr", format!("{:?}", t.multiplier_lr));
        kv("trainer.initial_multiplier", format!("{:?}", t.initial_multiplier));
        kv("trainer.total_steps", t.total_steps.to_string());
        kv("trainer.eval_every", t.eval_every.to_string());
        kv("trainer.eval_episodes", t.eval_episodes.to_string());
        kv("trainer.variant", t.variant.name().into());
        kv("trainer.bootstrap", t.bootstrap.to_string());
        kv("trainer.success_enabled", t.success_enabled.to_string());
        kv(
            "trainer.multiplier_mode",
            match t.multiplier_mode {
                MultiplierMode::Normalized => "normalized",
                MultiplierMode::Unnormalized => "unnormalized",
            }
            .into(),
        );
        kv("trainer.entropy_in_constraint_targets", t.entropy_in_constraint_targets.to_string());
        kv("trainer.policy_hidden", list(&t.policy_hidden));
        kv("trainer.critic_hidden", list(&t.critic_hidden));
        kv("trainer.buffer_capacity", t.buffer_capacity.to_string());
        kv("td3.target_noise", format!("{:?}", t.td3.target_noise));
        kv("td3.noise_clip", format!("{:?}", t.td3.noise_clip));
        kv("td3.policy_delay", t.td3.policy_delay.to_string());
        kv("td3.exploration_noise", format!("{:?}", t.td3.exploration_noise));
        kv("constraints.active", self.active.join(", "));
        kv("report.track", self.tracked.join(", "));
        for (n, v) in &self.thresholds {
            kv(&format!("thresholds.{n}"), format!("{v:?}"));
        }
        kv("stability.switch_fraction", format!("{:?}", self.stability.switch_fraction));
        kv("stability.feasible_threshold", format!("{:?}", self.stability.feasible_threshold));
        kv("grid.behaviors", self.grid.behaviors.join(", "));
        kv("grid.weights", self.grid.weights.iter().map(|w| format!("{w:?}")).collect::<Vec<_>>().join(", "));
        kv("grid.performance_floor", format!("{:?}", self.grid.performance_floor));
        kv("grid.eval_episodes", self.grid.eval_episodes.to_string());
        s
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config(format!("expected a number, got {s:?}")))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.replace('_', "").parse::<u64>().map_err(|_| Error::Config(format!("expected a non-negative integer, got {s:?}")))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("expected true or false, got {s:?}"))),
    }
}

fn parse_list<V>(s: &str, item: impl Fn(&str) -> Result<V>) -> Result<Vec<V>> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(item).collect()
}

fn parse_names(s: &str) -> Result<Vec<String>> {
    let names: Vec<String> = parse_list(s, |p| Ok(p.to_string()))?;
    if let Some(bad) = names.iter().find(|n| indicator(n).is_none()) {
        return Err(Error::Config(format!("unknown behavior {bad:?}")));
    }
    Ok(names)
}

fn parse_rects(s: &str) -> Result<Vec<Rect>> {
    if s == "none" {
        return Ok(vec![]);
    }
    s.split(';')
        .map(|chunk| {
            let v = parse_list(chunk, parse_f64)?;
            if v.len() != 4 {
                return Err(Error::Config(format!("lava rectangle needs `x0, z0, x1, z1`, got {chunk:?}")));
            }
            Ok(Rect::new(v[0], v[1], v[2], v[3]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides_on_top_of_preset() {
        let cfg = RunConfig::parse(
            "# two constraints\n\
             experiment.name = demo\n\
             experiment.seeds = 1, 2, 3\n\
             trainer.total_steps = 1_000\n\
             arena.half_extent = 5.5\n\
             arena.lava = -1, -1, 1, 1; 2, 2, 3, 3\n\
             constraints.active = in_lava, reached_goal\n\
             thresholds.in_lava = 0.02\n",
        )
        .unwrap();
        assert_eq!(cfg.name, "demo");
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
        assert_eq!(cfg.trainer.total_steps, 1000);
        assert_eq!(cfg.arena.half_extent, 5.5);
        assert_eq!(cfg.arena.lava_rects.len(), 2);
        let cs = cfg.constraint_set().unwrap();
        assert_eq!(cs.k(), 1);
        assert!(cs.has_success());
        assert_eq!(cs.behaviors[0].threshold, 0.02);
        assert_eq!(cs.success.as_ref().unwrap().threshold, 0.99);
    }

    #[test]
    fn unknown_keys_are_errors_with_line_numbers() {
        match RunConfig::parse("experiment.name = x\ntrainer.gama = 0.9\n") {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("trainer.gama"));
            }
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::parse("thresholds.flying = 0.1").is_err());
        assert!(RunConfig::parse("constraints.active = flying").is_err());
        assert!(RunConfig::parse("no equals sign").is_err());
        assert!(RunConfig::parse("trainer.bootstrap = yes").is_err());
    }

    #[test]
    fn preset_applies_first_wherever_it_appears() {
        let cfg = RunConfig::parse("trainer.total_steps = 7\nexperiment.preset = arena_full\n").unwrap();
        assert_eq!(cfg.trainer.total_steps, 7);
        assert_eq!(cfg.trainer.batch_size, 256);
        assert_eq!(cfg.preset, "arena_full");
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = presets::desk();
        cfg.thresholds.push(("on_ground".into(), 0.6));
        cfg.active = vec!["on_ground".into()];
        let again = RunConfig::parse(&cfg.render()).unwrap();
        assert_eq!(again, cfg);
        for name in presets::NAMES {
            let p = presets::by_name(name).unwrap();
            assert_eq!(RunConfig::parse(&p.render()).unwrap(), p, "{name}");
        }
    }

    #[test]
    fn on_ground_needs_a_threshold() {
        assert!(RunConfig::parse("constraints.active = on_ground").is_err());
        let cfg = RunConfig::parse("constraints.active = on_ground\nthresholds.on_ground = 0\n").unwrap();
        let cs = cfg.constraint_set().unwrap();
        assert_eq!(cs.behaviors[0].threshold, 0.0);
    }
}
