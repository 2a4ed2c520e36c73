//! The interface trainers and evaluators drive.

use crate::error::Result;
use crate::events::EventVector;

/// Result of a single environment tick.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
    /// Raw environment events, in the environment's own fixed order.
    pub events: EventVector,
}

/// An episodic continuous-control environment with indicator events.
pub trait Environment {
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    /// Names of the raw events, in event-vector order.
    fn event_names(&self) -> Vec<String>;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<StepOutcome>;
}
