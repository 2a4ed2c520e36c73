//! The environment loop around [`Agent`].

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainerConfig;
use super::learner::{ActMode, Agent, RoundStats};
use super::metrics::{metrics_csv, MetricsRow, MetricsSchema};
use crate::buffer::ReplayBuffer;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::events::{ConstraintSet, ConstraintSpec};
use crate::scalar::Scalar;
use crate::seeding::{derive_seed, stream_rng, Stream};

/// Seeds of the evaluation episodes of a run; identical at every evaluation point.
pub fn eval_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    (0..episodes as u64).map(|i| derive_seed(seed, Stream::EvalEpisodes as u64, i)).collect()
}

/// Seed of training episode `episode`.
pub fn episode_seed(seed: u64, episode: u64) -> u64 {
    derive_seed(seed, Stream::TrainEpisodes as u64, episode)
}

/// Uniform action in `[-1, 1]^n`.
pub fn uniform_action<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Multiplier state right after one update.
#[derive(Clone, Debug, PartialEq)]
pub struct LambdaPoint {
    pub step: u64,
    /// `lambda_0, lambda_1, ..` as used by the actor.
    pub weights: Vec<f64>,
    /// Raw parameters: logits or unnormalized multipliers.
    pub params: Vec<f64>,
    /// Behavior rates the update was computed from.
    pub rates: Vec<f64>,
}

pub struct Trainer<T, E> {
    pub agent: Agent<T>,
    pub buffer: ReplayBuffer<T>,
    pub rows: Vec<MetricsRow>,
    pub lambda_trace: Vec<LambdaPoint>,
    env: E,
    eval_env: E,
    tracked: Vec<ConstraintSpec>,
    seed: u64,
    explore_rng: ChaCha8Rng,
    update_rng: ChaCha8Rng,
    step: u64,
    episode: u64,
    obs: Vec<f64>,
    last_round: Option<RoundStats>,
    last_objective: f64,
}

impl<T: Scalar, E: Environment + Clone> Trainer<T, E> {
    /// `tracked` lists the behaviors reported at evaluation points; it is
    /// independent of the constraints being enforced.
    pub fn new(
        mut env: E,
        constraints: ConstraintSet,
        tracked: Vec<ConstraintSpec>,
        config: TrainerConfig,
        seed: u64,
    ) -> Result<Self> {
        let (obs_dim, act_dim) = (env.obs_dim(), env.act_dim());
        let agent = Agent::new(obs_dim, act_dim, constraints, config, &mut stream_rng(seed, Stream::Init))?;
        let buffer = ReplayBuffer::new(agent.config.buffer_capacity, obs_dim, act_dim, agent.constraints.slots())?;
        let eval_env = env.clone();
        let obs = env.reset(episode_seed(seed, 0))?;
        Ok(Self {
            agent,
            buffer,
            rows: Vec::new(),
            lambda_trace: Vec::new(),
            env,
            eval_env,
            tracked,
            seed,
            explore_rng: stream_rng(seed, Stream::Explore),
            update_rng: stream_rng(seed, Stream::Update),
            step: 0,
            episode: 0,
            obs,
            last_round: None,
            last_objective: f64::NAN,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn schema(&self) -> MetricsSchema {
        let slots = self.agent.constraints.slots();
        MetricsSchema {
            rate_names: self.tracked.iter().map(|s| s.name.clone()).collect(),
            lambdas: if slots == 0 { 0 } else { slots + 1 },
            critics: self.agent.critics.len(),
        }
    }

    pub fn csv(&self) -> String {
        metrics_csv(&self.schema(), &self.rows)
    }

    /// Runs until `total_steps`. A failure is reported as a halt at the
    /// current step; rows logged so far remain available.
    pub fn run(&mut self) -> Result<()> {
        while self.step < self.agent.config.total_steps {
            if let Err(e) = self.advance() {
                return Err(match e {
                    Error::Halted { .. } => e,
                    other => Error::Halted { step: self.step, reason: other.to_string() },
                });
            }
        }
        Ok(())
    }

    /// One environment step plus whatever updates fall due after it.
    pub fn advance(&mut self) -> Result<()> {
        let cfg = &self.agent.config;
        let action = if self.step < cfg.random_steps {
            uniform_action(&mut self.explore_rng, self.agent.act_dim())
        } else {
            self.agent.act(&self.obs, ActMode::Stochastic, &mut self.explore_rng)?
        };
        let out = self.env.step(&action)?;
        let events = self.agent.constraints.project(&out.events);
        let state: Vec<T> = self.obs.iter().map(|&v| T::lit(v)).collect();
        let next: Vec<T> = out.obs.iter().map(|&v| T::lit(v)).collect();
        let act: Vec<T> = action.iter().map(|&v| T::lit(v)).collect();
        self.buffer.push(&state, &act, T::lit(out.reward), &next, out.done, out.truncated, &events)?;
        self.step += 1;
        if out.done || out.truncated {
            self.episode += 1;
            self.obs = self.env.reset(episode_seed(self.seed, self.episode))?;
        } else {
            self.obs = out.obs;
        }

        if let Some(sw) = self.agent.config.threshold_switch.clone() {
            if self.step == sw.step {
                self.agent.set_threshold(sw.slot, sw.threshold)?;
            }
        }

        let cfg = &self.agent.config;
        if self.step % cfg.update_every == 0
            && self.step >= cfg.warmup_steps
            && self.buffer.len() >= cfg.batch_size
        {
            for _ in 0..cfg.gradient_steps {
                let batch = self.buffer.sample_batch(self.agent.config.batch_size, &mut self.update_rng)?;
                let stats = self.agent.update_round(&batch, &mut self.update_rng)?;
                if let Some(o) = stats.policy_objective {
                    self.last_objective = o;
                }
                self.last_round = Some(stats);
            }
        }

        if self.step % self.agent.config.multiplier_every == 0 {
            if let Some(rates) = self.agent.update_multipliers(&self.buffer)? {
                let w = self.agent.weights();
                let mut weights = vec![w.lambda0.to_f64_lossy()];
                weights.extend(w.lambdas.iter().map(|v| v.to_f64_lossy()));
                self.lambda_trace.push(LambdaPoint {
                    step: self.step,
                    weights,
                    params: self.agent.multipliers.parameters().iter().map(|v| v.to_f64_lossy()).collect(),
                    rates: rates.rates,
                });
            }
        }

        if self.step % self.agent.config.eval_every == 0 {
            let report = self.evaluate_now()?;
            self.rows.push(self.row(&report));
        }
        Ok(())
    }

    /// Deterministic-action rollouts on the run's fixed evaluation seeds.
    pub fn evaluate_now(&mut self) -> Result<EvalReport> {
        let seeds = eval_seeds(self.seed, self.agent.config.eval_episodes);
        let agent = &self.agent;
        let mut unused = stream_rng(0, Stream::Explore);
        evaluate(&mut self.eval_env, &seeds, &self.tracked, |o| agent.act(o, ActMode::Deterministic, &mut unused))
    }

    fn row(&self, report: &EvalReport) -> MetricsRow {
        let lambdas = if self.agent.constraints.slots() == 0 {
            vec![]
        } else {
            let w = self.agent.weights();
            std::iter::once(w.lambda0).chain(w.lambdas.iter().copied()).map(|v| v.to_f64_lossy()).collect()
        };
        MetricsRow {
            step: self.step,
            return_mean: report.return_mean,
            success_rate: report.success_rate,
            rates: report.rates.clone(),
            lambdas,
            critic_losses: match &self.last_round {
                Some(r) => r.critic_losses.clone(),
                None => vec![f64::NAN; self.agent.critics.len()],
            },
            policy_objective: self.last_objective,
        }
    }

    pub fn into_agent(self) -> Agent<T> {
        self.agent
    }
}
