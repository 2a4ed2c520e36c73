//! Desk-scale 2D navigation arena.
//!
//! The agent moves on a square floor, must reach a goal tile and exposes six
//! indicator events: five behaviors plus goal reaching. Kinematics are
//! expressed in the agent's body frame: `vz` drives forward along the heading,
//! `vx` strafes to the right.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Environment, StepOutcome};
use crate::error::{Error, Result};
use crate::events::EventVector;

pub const NOT_LOOKING: usize = 0;
pub const NOT_ON_GROUND: usize = 1;
pub const IN_LAVA: usize = 2;
pub const ABOVE_SPEED_LIMIT: usize = 3;
pub const UNDER_ENERGY: usize = 4;
pub const REACHED_GOAL: usize = 5;
pub const NUM_EVENTS: usize = 6;

pub const EVENT_NAMES: [&str; NUM_EVENTS] = [
    "not_looking_at_marker",
    "not_on_ground",
    "in_lava",
    "above_speed_limit",
    "under_energy_floor",
    "reached_goal",
];

/// Side of the square lava probe grid centered on the agent.
pub const PROBE_SIDE: usize = 5;
pub const ACTION_DIM: usize = 5;

/// Observation layout. Offsets into the vector returned by [`observe`].
pub mod obs_layout {
    use super::{NUM_EVENTS, PROBE_SIDE};
    /// position / half_extent (x, z)
    pub const POSITION: usize = 0;
    /// (cos, sin) of heading
    pub const HEADING: usize = 2;
    /// velocity / max_speed, world frame
    pub const VELOCITY: usize = 4;
    /// goal offset in body frame (right, forward) / (2 half_extent)
    pub const GOAL_REL: usize = 6;
    pub const GOAL_DIST: usize = 8;
    pub const ON_GROUND: usize = 9;
    pub const MARKER_REL: usize = 10;
    pub const MARKER_DIST: usize = 12;
    /// signed heading-to-marker angle / pi
    pub const LOOK_ANGLE: usize = 13;
    pub const MARKER_IN_FOV: usize = 14;
    pub const ENERGY: usize = 15;
    pub const RECHARGING: usize = 16;
    pub const IN_LAVA: usize = 17;
    pub const LAVA_PROBE: usize = 18;
    pub const EVENT_RATES: usize = LAVA_PROBE + PROBE_SIDE * PROBE_SIDE;
    pub const REMAINING_TIME: usize = EVENT_RATES + NUM_EVENTS;
    pub const DIM: usize = REMAINING_TIME + 1;
}

pub const OBS_DIM: usize = obs_layout::DIM;

const SPAWN_ATTEMPTS: usize = 1_000;

/// Axis-aligned rectangle `[x0, x1] x [z0, z1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub z0: f64,
    pub x1: f64,
    pub z1: f64,
}

impl Rect {
    pub fn new(x0: f64, z0: f64, x1: f64, z1: f64) -> Self {
        Self { x0: x0.min(x1), z0: z0.min(z1), x1: x0.max(x1), z1: z0.max(z1) }
    }

    /// Strict interior test; the border is safe ground.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] > self.x0 && p[0] < self.x1 && p[1] > self.z0 && p[1] < self.z1
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.z1 - self.z0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArenaConfig {
    pub half_extent: f64,
    pub max_steps: u32,
    pub goal_radius: f64,
    pub marker_position: [f64; 2],
    pub fov_half_angle: f64,
    /// Translation speed at full command, meters per step.
    pub max_speed: f64,
    /// Heading change at full yaw command, radians per step.
    pub max_yaw: f64,
    pub speed_limit: f64,
    pub energy_drain: f64,
    pub energy_recharge: f64,
    pub energy_floor: f64,
    pub jump_duration: u32,
    pub lava_rects: Vec<Rect>,
    pub shaping_scale: f64,
    pub seed: u64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            half_extent: 10.0,
            max_steps: 300,
            goal_radius: 1.0,
            marker_position: [0.0, 10.0],
            fov_half_angle: PI / 4.0,
            max_speed: 0.5,
            max_yaw: 0.5,
            speed_limit: 0.4,
            energy_drain: 0.004,
            energy_recharge: 0.05,
            energy_floor: 0.2,
            jump_duration: 4,
            lava_rects: vec![Rect::new(-7.0, -1.5, -1.0, 1.5), Rect::new(1.0, -1.5, 7.0, 1.5)],
            shaping_scale: 0.1,
            seed: 0,
        }
    }
}

impl ArenaConfig {
    /// Small arena used for the scaled-down experiments.
    pub fn desk() -> Self {
        Self {
            half_extent: 4.0,
            max_steps: 60,
            goal_radius: 0.75,
            marker_position: [0.0, 4.0],
            max_yaw: 1.0,
            lava_rects: vec![Rect::new(-2.5, -0.6, 2.5, 0.6)],
            shaping_scale: 0.5,
            ..Self::default()
        }
    }

    pub fn without_lava(mut self) -> Self {
        self.lava_rects.clear();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.half_extent > 0.0) {
            return bad(format!("half_extent must be positive, got {}", self.half_extent));
        }
        if !(self.goal_radius > 0.0 && self.goal_radius < self.half_extent) {
            return bad(format!("goal_radius {} outside (0, half_extent)", self.goal_radius));
        }
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle < PI) {
            return bad(format!("fov_half_angle {} outside (0, pi)", self.fov_half_angle));
        }
        for (name, v) in [("energy_drain", self.energy_drain), ("energy_recharge", self.energy_recharge)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(format!("{name} {v} outside (0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.energy_floor) {
            return bad(format!("energy_floor {} outside [0, 1]", self.energy_floor));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if !(self.max_speed > 0.0 && self.max_yaw >= 0.0 && self.speed_limit >= 0.0) {
            return bad("kinematic limits must be non-negative (max_speed positive)".into());
        }
        let h = self.half_extent;
        for r in &self.lava_rects {
            if r.x0 < -h || r.z0 < -h || r.x1 > h || r.z1 > h {
                return bad(format!("lava rectangle {r:?} leaves the arena"));
            }
        }
        Ok(())
    }

    fn in_lava_area(&self, p: [f64; 2]) -> bool {
        self.lava_rects.iter().any(|r| r.contains(p))
    }
}

/// Clamped, body-frame action.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ActionCommand {
    pub vx: f64,
    pub vz: f64,
    pub yaw_rate: f64,
    pub jump: f64,
    pub recharge: f64,
}

impl ActionCommand {
    pub fn from_slice(a: &[f64]) -> Result<Self> {
        if a.len() != ACTION_DIM {
            return Err(Error::Shape(format!("arena expects {ACTION_DIM} actions, got {}", a.len())));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("arena action".into()));
        }
        let c = |x: f64| x.clamp(-1.0, 1.0);
        Ok(Self { vx: c(a[0]), vz: c(a[1]), yaw_rate: c(a[2]), jump: c(a[3]), recharge: c(a[4]) })
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.vx, self.vz, self.yaw_rate, self.jump, self.recharge]
    }

    pub fn jumps(&self) -> bool {
        self.jump > 0.0
    }

    pub fn recharges(&self) -> bool {
        self.recharge > 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArenaState {
    pub position: [f64; 2],
    pub heading: f64,
    pub velocity: [f64; 2],
    pub energy: f64,
    pub airborne_remaining: u32,
    pub recharging: bool,
    pub goal: [f64; 2],
    pub step_index: u32,
    /// Per-episode counts of each raw event, feeding the rate observations.
    pub event_counts: [u32; NUM_EVENTS],
}

impl ArenaState {
    pub fn forward(&self) -> [f64; 2] {
        [self.heading.cos(), self.heading.sin()]
    }

    pub fn right(&self) -> [f64; 2] {
        [self.heading.sin(), -self.heading.cos()]
    }

    /// World vector expressed as (right, forward) body coordinates.
    pub fn to_body(&self, w: [f64; 2]) -> [f64; 2] {
        let (r, f) = (self.right(), self.forward());
        [w[0] * r[0] + w[1] * r[1], w[0] * f[0] + w[1] * f[1]]
    }

    pub fn goal_distance(&self) -> f64 {
        norm(sub(self.goal, self.position))
    }

    pub fn on_ground(&self) -> bool {
        self.airborne_remaining == 0
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn wrap_angle(a: f64) -> f64 {
    let mut x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x <= -PI {
        x += 2.0 * PI;
    }
    x
}

/// Signed angle from the heading to the marker, in `(-pi, pi]`.
pub fn marker_angle(state: &ArenaState, config: &ArenaConfig) -> f64 {
    let d = sub(config.marker_position, state.position);
    if norm(d) == 0.0 {
        return 0.0;
    }
    wrap_angle(d[1].atan2(d[0]) - state.heading)
}

/// Places agent and goal on lava-free ground, deterministically from `seed`.
pub fn reset(config: &ArenaConfig, seed: u64) -> Result<(ArenaState, Vec<f64>)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = config.half_extent;
    let draw = |rng: &mut ChaCha8Rng| [rng.random_range(-h..=h), rng.random_range(-h..=h)];

    let mut attempts = 0;
    let position = loop {
        if attempts == SPAWN_ATTEMPTS {
            return Err(Error::UnsatisfiableSpawn(SPAWN_ATTEMPTS));
        }
        attempts += 1;
        let p = draw(&mut rng);
        if !config.in_lava_area(p) {
            break p;
        }
    };
    let goal = loop {
        if attempts == SPAWN_ATTEMPTS {
            return Err(Error::UnsatisfiableSpawn(SPAWN_ATTEMPTS));
        }
        attempts += 1;
        let g = draw(&mut rng);
        if !config.in_lava_area(g) && norm(sub(g, position)) >= 2.0 * config.goal_radius {
            break g;
        }
    };
    let heading = rng.random_range(-PI..PI);
    let state = ArenaState {
        position,
        heading,
        velocity: [0.0, 0.0],
        energy: 1.0,
        airborne_remaining: 0,
        recharging: false,
        goal,
        step_index: 0,
        event_counts: [0; NUM_EVENTS],
    };
    let obs = observe(&state, config);
    Ok((state, obs))
}

/// Output of [`step`].
#[derive(Clone, Debug, PartialEq)]
pub struct ArenaStep {
    pub state: ArenaState,
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
    pub events: EventVector,
}

/// Advances the arena by one tick.
pub fn step(state: &ArenaState, action: &ActionCommand, config: &ArenaConfig) -> Result<ArenaStep> {
    let a = ActionCommand::from_slice(&action.to_vec())?;
    let mut s = state.clone();
    let prev_distance = state.goal_distance();

    s.recharging = a.recharges();
    if s.airborne_remaining > 0 {
        s.airborne_remaining -= 1;
    } else if a.jumps() && !s.recharging {
        s.airborne_remaining = config.jump_duration;
    }

    s.heading = wrap_angle(s.heading + a.yaw_rate * config.max_yaw);

    if s.recharging {
        s.velocity = [0.0, 0.0];
        s.energy = (s.energy + config.energy_recharge).min(1.0);
    } else {
        let mut cmd = [a.vx, a.vz];
        let m = norm(cmd);
        if m > 1.0 {
            cmd = [cmd[0] / m, cmd[1] / m];
        }
        let (r, f) = (s.right(), s.forward());
        s.velocity = [
            config.max_speed * (cmd[0] * r[0] + cmd[1] * f[0]),
            config.max_speed * (cmd[0] * r[1] + cmd[1] * f[1]),
        ];
        s.energy = (s.energy - config.energy_drain).max(0.0);
    }

    let h = config.half_extent;
    s.position = [
        (s.position[0] + s.velocity[0]).clamp(-h, h),
        (s.position[1] + s.velocity[1]).clamp(-h, h),
    ];
    s.step_index += 1;

    let distance = s.goal_distance();
    let flags = events(&s, &a, config);
    let reached = flags.get(REACHED_GOAL);
    let reward = config.shaping_scale * (prev_distance - distance) + if reached { 1.0 } else { 0.0 };
    for (c, f) in s.event_counts.iter_mut().zip(flags.iter()) {
        *c += u32::from(f);
    }
    let done = reached;
    let truncated = !done && s.step_index >= config.max_steps;
    let obs = observe(&s, config);
    Ok(ArenaStep { state: s, obs, reward, done, truncated, events: flags })
}

/// The six raw indicators of a post-step state.
///
/// Comparisons are strict on the violating side; the goal test is inclusive.
pub fn events(state: &ArenaState, _action: &ActionCommand, config: &ArenaConfig) -> EventVector {
    let mut e = EventVector::zeros(NUM_EVENTS);
    e.set(NOT_LOOKING, marker_angle(state, config).abs() > config.fov_half_angle);
    e.set(NOT_ON_GROUND, !state.on_ground());
    e.set(IN_LAVA, state.on_ground() && config.in_lava_area(state.position));
    e.set(ABOVE_SPEED_LIMIT, norm(state.velocity) > config.speed_limit);
    e.set(UNDER_ENERGY, state.energy < config.energy_floor);
    e.set(REACHED_GOAL, state.goal_distance() <= config.goal_radius);
    e
}

/// Builds the observation vector; see [`obs_layout`].
pub fn observe(state: &ArenaState, config: &ArenaConfig) -> Vec<f64> {
    use obs_layout as L;
    let h = config.half_extent;
    let span = 2.0 * h;
    let mut o = vec![0.0; L::DIM];
    o[L::POSITION] = state.position[0] / h;
    o[L::POSITION + 1] = state.position[1] / h;
    let f = state.forward();
    o[L::HEADING] = f[0];
    o[L::HEADING + 1] = f[1];
    o[L::VELOCITY] = state.velocity[0] / config.max_speed;
    o[L::VELOCITY + 1] = state.velocity[1] / config.max_speed;

    let goal = sub(state.goal, state.position);
    let g = state.to_body(goal);
    o[L::GOAL_REL] = g[0] / span;
    o[L::GOAL_REL + 1] = g[1] / span;
    o[L::GOAL_DIST] = norm(goal) / (span * std::f64::consts::SQRT_2);
    o[L::ON_GROUND] = flag(state.on_ground());

    let marker = sub(config.marker_position, state.position);
    let m = state.to_body(marker);
    o[L::MARKER_REL] = m[0] / span;
    o[L::MARKER_REL + 1] = m[1] / span;
    o[L::MARKER_DIST] = norm(marker) / (span * std::f64::consts::SQRT_2);
    let angle = marker_angle(state, config);
    o[L::LOOK_ANGLE] = angle / PI;
    o[L::MARKER_IN_FOV] = flag(angle.abs() <= config.fov_half_angle);

    o[L::ENERGY] = state.energy;
    o[L::RECHARGING] = flag(state.recharging);
    o[L::IN_LAVA] = flag(state.on_ground() && config.in_lava_area(state.position));

    let (r, fw) = (state.right(), state.forward());
    let half = (PROBE_SIDE / 2) as f64;
    for i in 0..PROBE_SIDE {
        for j in 0..PROBE_SIDE {
            let (dr, df) = (i as f64 - half, j as f64 - half);
            let p = [
                state.position[0] + dr * r[0] + df * fw[0],
                state.position[1] + dr * r[1] + df * fw[1],
            ];
            o[L::LAVA_PROBE + i * PROBE_SIDE + j] = flag(config.in_lava_area(p));
        }
    }

    if state.step_index > 0 {
        for k in 0..NUM_EVENTS {
            o[L::EVENT_RATES + k] = state.event_counts[k] as f64 / state.step_index as f64;
        }
    }
    o[L::REMAINING_TIME] =
        1.0 - (state.step_index.min(config.max_steps) as f64 / config.max_steps as f64);
    o
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Stateful wrapper implementing [`Environment`].
#[derive(Clone, Debug)]
pub struct ArenaEnv {
    pub config: ArenaConfig,
    state: Option<ArenaState>,
}

impl ArenaEnv {
    pub fn new(config: ArenaConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, state: None })
    }

    pub fn state(&self) -> Option<&ArenaState> {
        self.state.as_ref()
    }

    /// Replaces the current state, e.g. to script a scenario.
    pub fn set_state(&mut self, state: ArenaState) {
        self.state = Some(state);
    }
}

impl Environment for ArenaEnv {
    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn act_dim(&self) -> usize {
        ACTION_DIM
    }

    fn event_names(&self) -> Vec<String> {
        EVENT_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let (state, obs) = reset(&self.config, seed)?;
        self.state = Some(state);
        Ok(obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepOutcome> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::Config("arena stepped before reset".into()))?;
        let cmd = ActionCommand::from_slice(action)?;
        let out = step(state, &cmd, &self.config)?;
        self.state = Some(out.state);
        Ok(StepOutcome {
            obs: out.obs,
            reward: out.reward,
            done: out.done,
            truncated: out.truncated,
            events: out.events,
        })
    }
}
