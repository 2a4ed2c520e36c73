//! Rollout evaluation of a fixed policy.

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::events::ConstraintSpec;

/// Aggregate statistics of a batch of evaluation episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub steps: u64,
    /// Fraction of episodes that ended by reaching a terminal state.
    pub success_rate: f64,
    /// Per tracked behavior: flagged timesteps over all timesteps.
    pub rates: Vec<f64>,
    pub return_mean: f64,
}

/// Runs one episode per seed with `policy` and tallies the tracked behaviors.
pub fn evaluate<E, P>(env: &mut E, seeds: &[u64], tracked: &[ConstraintSpec], mut policy: P) -> Result<EvalReport>
where
    E: Environment + ?Sized,
    P: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if seeds.is_empty() {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut counts = vec![0u64; tracked.len()];
    let (mut steps, mut successes, mut total_return) = (0u64, 0usize, 0.0);
    for &seed in seeds {
        let mut obs = env.reset(seed)?;
        loop {
            let action = policy(&obs)?;
            let out = env.step(&action)?;
            steps += 1;
            total_return += out.reward;
            for (c, spec) in counts.iter_mut().zip(tracked) {
                *c += u64::from(spec.indicator.read(&out.events));
            }
            if out.done {
                successes += 1;
            }
            if out.done || out.truncated {
                break;
            }
            obs = out.obs;
        }
    }
    Ok(EvalReport {
        episodes: seeds.len(),
        steps,
        success_rate: successes as f64 / seeds.len() as f64,
        rates: counts.iter().map(|&c| c as f64 / steps as f64).collect(),
        return_mean: total_return / seeds.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::{self, ArenaConfig, ArenaEnv, ActionCommand};
    use crate::events::Indicator;

    fn tracked() -> Vec<ConstraintSpec> {
        vec![
            ConstraintSpec::upper("not_looking", 0.1, Indicator::direct(arena::NOT_LOOKING)),
            ConstraintSpec::upper("lava", 0.01, Indicator::direct(arena::IN_LAVA)),
        ]
    }

    #[test]
    fn idle_agent_facing_away_never_looks() {
        let mut env = ArenaEnv::new(ArenaConfig::desk().without_lava()).unwrap();
        let mut env_probe = env.clone();
        let seeds: Vec<u64> = (0..4).collect();
        let report = evaluate(&mut env, &seeds, &tracked(), |_| Ok(vec![0.0; arena::ACTION_DIM])).unwrap();
        // without moving or turning, each episode keeps its spawn heading
        let mut expected = 0.0;
        for &s in &seeds {
            env_probe.reset(s).unwrap();
            let st = env_probe.state().unwrap().clone();
            let away = arena::marker_angle(&st, &env_probe.config).abs() > env_probe.config.fov_half_angle;
            expected += if away { 1.0 } else { 0.0 };
        }
        assert_eq!(report.rates[0], expected / seeds.len() as f64);
        assert_eq!(report.success_rate, 0.0);
        assert_eq!(report.rates[1], 0.0);
    }

    #[test]
    fn scripted_straight_to_goal_always_succeeds() {
        let cfg = ArenaConfig::desk().without_lava();
        let mut env = ArenaEnv::new(cfg).unwrap();
        let seeds: Vec<u64> = (100..120).collect();
        let report = evaluate(&mut env, &seeds, &tracked(), |obs| {
            // goal offset in the body frame, which is also the command frame
            let g = [obs[arena::obs_layout::GOAL_REL], obs[arena::obs_layout::GOAL_REL + 1]];
            let n = (g[0] * g[0] + g[1] * g[1]).sqrt().max(1e-9);
            Ok(ActionCommand { vx: g[0] / n, vz: g[1] / n, yaw_rate: 0.0, jump: -1.0, recharge: -1.0 }.to_vec())
        })
        .unwrap();
        assert_eq!(report.success_rate, 1.0);
    }

    #[test]
    fn repeated_evaluation_is_identical() {
        let mut env = ArenaEnv::new(ArenaConfig::desk()).unwrap();
        let seeds: Vec<u64> = (0..10).collect();
        let pol = |o: &[f64]| Ok(vec![o[0].sin(), o[1].cos(), 0.3, -1.0, -1.0]);
        let a = evaluate(&mut env, &seeds, &tracked(), pol).unwrap();
        let b = evaluate(&mut env, &seeds, &tracked(), pol).unwrap();
        assert_eq!(a, b);
    }
}
