//! Agent parameters and the gradient updates applied to them.

use rand::Rng;

use super::config::{TrainerConfig, Variant};
use crate::buffer::{Batch, ReplayBuffer};
use crate::error::{Error, Result};
use crate::events::ConstraintSet;
use crate::multipliers::{objective_weights, LagrangeWeights, Multipliers, RateEstimate};
use crate::neural::{concat_rows, standard_normal, AdamState, CriticEnsemble, DeterministicPolicy, GaussianPolicy, NetSet};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum Actor<T> {
    Gaussian(GaussianPolicy<T>),
    Deterministic { online: DeterministicPolicy<T>, target: DeterministicPolicy<T> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Stochastic,
    Deterministic,
}

/// Inputs shared by every critic target within one round.
#[derive(Clone, Debug)]
pub struct NextActions<T> {
    /// `[s' | a']` rows.
    pub next_sa: Vec<T>,
    /// `-alpha * log pi(a' | s')` per row; zeros for the deterministic actor.
    pub entropy_bonus: Vec<T>,
}

/// Losses of one update round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundStats {
    pub critic_losses: Vec<f64>,
    /// `None` when the actor was not updated this round.
    pub policy_objective: Option<f64>,
}

fn to_f64<T: Scalar>(v: T) -> f64 {
    v.to_f64_lossy()
}

fn check_finite<T: Scalar>(values: &[T], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Policy, critics and multipliers of one learner.
///
/// Critic 0 models the reward; critic `k >= 1` models multiplier slot `k - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Agent<T> {
    pub actor: Actor<T>,
    pub actor_optim: AdamState<T>,
    pub critics: CriticEnsemble<T>,
    pub multipliers: Multipliers<T>,
    pub constraints: ConstraintSet,
    pub config: TrainerConfig,
    obs_dim: usize,
    act_dim: usize,
    critic_rounds: u64,
}

impl<T: Scalar> Agent<T> {
    /// Builds all networks from `rng`: the actor first, then critics in order.
    ///
    /// A success constraint is dropped when the configuration disables it.
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        act_dim: usize,
        constraints: ConstraintSet,
        config: TrainerConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        constraints.validate()?;
        let constraints = if config.success_enabled {
            constraints
        } else {
            ConstraintSet::new(constraints.behaviors, None)?
        };
        let lr = T::lit(config.lr);
        let actor = match config.variant {
            Variant::Sac => Actor::Gaussian(GaussianPolicy::new(obs_dim, act_dim, &config.policy_hidden, rng)?),
            Variant::Td3 => {
                let online = DeterministicPolicy::new(obs_dim, act_dim, &config.policy_hidden, rng)?;
                Actor::Deterministic { target: online.clone(), online }
            }
        };
        let n_params = match &actor {
            Actor::Gaussian(p) => p.net.num_params(),
            Actor::Deterministic { online, .. } => online.net.num_params(),
        };
        let critics = CriticEnsemble::new(1 + constraints.slots(), obs_dim, act_dim, &config.critic_hidden, lr, rng)?;
        let multipliers = Multipliers::new(
            config.multiplier_mode,
            constraints.slots(),
            T::lit(config.initial_multiplier),
            T::lit(config.multiplier_lr),
        );
        Ok(Self {
            actor,
            actor_optim: AdamState::new(n_params, lr),
            critics,
            multipliers,
            constraints,
            config,
            obs_dim,
            act_dim,
            critic_rounds: 0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn critic_rounds(&self) -> u64 {
        self.critic_rounds
    }

    pub fn weights(&self) -> LagrangeWeights<T> {
        self.multipliers.weights()
    }

    /// Coefficient of each critic in the actor objective.
    pub fn objective_weights(&self) -> Vec<T> {
        objective_weights(&self.weights(), self.constraints.has_success(), self.config.bootstrap)
    }

    /// Action for one observation. Stochastic mode samples from the policy
    /// (the deterministic actor adds Gaussian exploration noise); deterministic
    /// mode returns `tanh(mean)` or the actor output.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], mode: ActMode, rng: &mut R) -> Result<Vec<f64>> {
        let o: Vec<T> = obs.iter().map(|&v| T::lit(v)).collect();
        let a = match (&self.actor, mode) {
            (Actor::Gaussian(p), ActMode::Stochastic) => p.sample(&o, rng)?.0,
            (Actor::Gaussian(p), ActMode::Deterministic) => p.mode(&o)?,
            (Actor::Deterministic { online, .. }, ActMode::Deterministic) => online.act(&o)?,
            (Actor::Deterministic { online, .. }, ActMode::Stochastic) => {
                let mut a = online.act(&o)?;
                let noise: Vec<T> = standard_normal(rng, a.len());
                let sigma = T::lit(self.config.td3.exploration_noise);
                for (x, n) in a.iter_mut().zip(noise) {
                    *x = (*x + sigma * n).max(-T::one()).min(T::one());
                }
                a
            }
        };
        Ok(a.into_iter().map(to_f64).collect())
    }

    /// Samples `a' ~ pi(. | s')` for the SAC critic targets.
    pub fn sac_next_actions<R: Rng + ?Sized>(&self, batch: &Batch<T>, rng: &mut R) -> Result<NextActions<T>> {
        let Actor::Gaussian(policy) = &self.actor else {
            return Err(Error::Config("SAC targets need a Gaussian policy".into()));
        };
        let next = policy.sample_batch(&batch.next_states, batch.len, rng)?;
        let alpha = T::lit(self.config.alpha);
        Ok(NextActions {
            next_sa: concat_rows(&batch.next_states, self.obs_dim, &next.actions, self.act_dim, batch.len),
            entropy_bonus: next.log_probs.iter().map(|&lp| -(alpha * lp)).collect(),
        })
    }

    /// Smoothed target actions `clip(mu'(s') + clip(noise), -1, 1)`.
    pub fn td3_next_actions<R: Rng + ?Sized>(&self, batch: &Batch<T>, rng: &mut R) -> Result<NextActions<T>> {
        let Actor::Deterministic { target, .. } = &self.actor else {
            return Err(Error::Config("TD3 targets need a deterministic actor".into()));
        };
        let cache = target.forward(&batch.next_states, batch.len)?;
        let noise: Vec<T> = standard_normal(rng, batch.len * self.act_dim);
        let (sigma, clip) = (T::lit(self.config.td3.target_noise), T::lit(self.config.td3.noise_clip));
        let actions: Vec<T> = cache
            .output()
            .iter()
            .zip(noise)
            .map(|(&a, n)| (a + (sigma * n).max(-clip).min(clip)).max(-T::one()).min(T::one()))
            .collect();
        Ok(NextActions {
            next_sa: concat_rows(&batch.next_states, self.obs_dim, &actions, self.act_dim, batch.len),
            entropy_bonus: vec![T::zero(); batch.len],
        })
    }

    /// Bootstrapped regression targets of critic `k`.
    pub fn critic_targets(&self, k: usize, batch: &Batch<T>, next: &NextActions<T>) -> Result<Vec<T>> {
        if k >= self.critics.len() {
            return Err(Error::Shape(format!("critic {k} of {}", self.critics.len())));
        }
        let min_q = self.critics.members[k].min_q(NetSet::Target, &next.next_sa, batch.len)?;
        let rewards = if k == 0 { batch.rewards.clone() } else { batch.event_column(k - 1) };
        let gamma = T::lit(if k == 0 { self.config.gamma } else { self.config.gamma_constraint });
        let with_entropy = k == 0 || self.config.entropy_in_constraint_targets;
        Ok((0..batch.len)
            .map(|i| {
                let soft = if with_entropy { min_q.values[i] + next.entropy_bonus[i] } else { min_q.values[i] };
                rewards[i] + batch.not_done[i] * gamma * soft
            })
            .collect())
    }

    /// One Adam step on both twins of critic `k`, optionally followed by a
    /// soft target update. Returns the mean squared error averaged over the
    /// twins (before the step).
    pub fn critic_update(&mut self, k: usize, batch: &Batch<T>, next: &NextActions<T>, soft_update: bool) -> Result<T> {
        let y = self.critic_targets(k, batch, next)?;
        check_finite(&y, &format!("critic {k} targets"))?;
        let sa = concat_rows(&batch.states, self.obs_dim, &batch.actions, self.act_dim, batch.len);
        let n = T::lit(batch.len as f64);
        let two = T::lit(2.0);
        let member = &mut self.critics.members[k];
        let mut loss = T::zero();
        for j in 0..2 {
            let net = &mut member.online[j];
            let cache = net.forward(&sa, batch.len)?;
            let diff: Vec<T> = cache.output().iter().zip(&y).map(|(&q, &t)| q - t).collect();
            let mse = diff.iter().map(|&d| d * d).sum::<T>() / n;
            if !mse.is_finite() {
                return Err(Error::NonFinite(format!("critic {k} loss")));
            }
            loss += mse;
            let upstream: Vec<T> = diff.iter().map(|&d| two * d / n).collect();
            let mut grads = net.zero_grads();
            net.backward(&cache, &upstream, Some(&mut grads), false)?;
            member.optim[j].step(net.params_mut(), &grads)?;
        }
        if soft_update {
            member.soft_update_targets(T::lit(self.config.tau));
        }
        Ok(loss / two)
    }

    /// Accumulates `-(1/n) sum_k w_k dQ_k/da` over critics with non-zero weight
    /// and returns it together with the per-row weighted Q sum.
    fn weighted_q(&self, states: &[T], actions: &[T], n: usize) -> Result<(Vec<T>, Vec<T>)> {
        let sa = concat_rows(states, self.obs_dim, actions, self.act_dim, n);
        let width = self.obs_dim + self.act_dim;
        let inv_n = T::one() / T::lit(n as f64);
        let mut q_sum = vec![T::zero(); n];
        let mut d_actions = vec![T::zero(); n * self.act_dim];
        for (member, w) in self.critics.members.iter().zip(self.objective_weights()) {
            if w == T::zero() {
                continue;
            }
            let m = member.min_q(NetSet::Online, &sa, n)?;
            for (acc, &q) in q_sum.iter_mut().zip(&m.values) {
                *acc += w * q;
            }
            let upstream = vec![-(w * inv_n); n];
            let dx = member.min_q_input_grad(NetSet::Online, &m, &upstream)?;
            for r in 0..n {
                for d in 0..self.act_dim {
                    d_actions[r * self.act_dim + d] += dx[r * width + self.obs_dim + d];
                }
            }
        }
        Ok((q_sum, d_actions))
    }

    /// Batch-mean SAC actor objective and its parameter gradient, for fixed
    /// reparameterization noise.
    pub fn sac_objective_and_grad(&self, states: &[T], n: usize, noise: &[T]) -> Result<(T, Vec<T>)> {
        let Actor::Gaussian(policy) = &self.actor else {
            return Err(Error::Config("SAC actor update needs a Gaussian policy".into()));
        };
        let sample = policy.sample_with_noise(states, n, noise)?;
        let (q_sum, d_actions) = self.weighted_q(states, &sample.actions, n)?;
        let alpha = T::lit(self.config.alpha);
        let inv_n = T::one() / T::lit(n as f64);
        let objective =
            sample.log_probs.iter().zip(&q_sum).map(|(&lp, &q)| -(alpha * lp) + q).sum::<T>() * inv_n;
        let d_log_probs = vec![alpha * inv_n; n];
        let mut grads = policy.net.zero_grads();
        policy.backward(&sample, &d_actions, &d_log_probs, &mut grads)?;
        Ok((objective, grads))
    }

    /// Batch-mean deterministic actor objective `sum_k w_k min_j Q_k` and the
    /// gradient of its negation.
    pub fn td3_objective_and_grad(&self, states: &[T], n: usize) -> Result<(T, Vec<T>)> {
        let Actor::Deterministic { online, .. } = &self.actor else {
            return Err(Error::Config("TD3 actor update needs a deterministic actor".into()));
        };
        let cache = online.forward(states, n)?;
        let (q_sum, d_actions) = self.weighted_q(states, cache.output(), n)?;
        let objective = q_sum.iter().copied().sum::<T>() / T::lit(n as f64);
        let mut grads = online.net.zero_grads();
        online.backward(&cache, &d_actions, &mut grads)?;
        Ok((objective, grads))
    }

    /// One Adam ascent step on the SAC actor objective with fresh actions.
    pub fn policy_update<R: Rng + ?Sized>(&mut self, batch: &Batch<T>, rng: &mut R) -> Result<T> {
        let noise = standard_normal(rng, batch.len * self.act_dim);
        let (objective, grads) = self.sac_objective_and_grad(&batch.states, batch.len, &noise)?;
        if !objective.is_finite() {
            return Err(Error::NonFinite("policy objective".into()));
        }
        let Actor::Gaussian(policy) = &mut self.actor else { unreachable!() };
        self.actor_optim.step(policy.net.params_mut(), &grads)?;
        Ok(objective)
    }

    /// Critic steps for every objective followed by one actor step.
    pub fn sac_round<R: Rng + ?Sized>(&mut self, batch: &Batch<T>, rng: &mut R) -> Result<RoundStats> {
        let next = self.sac_next_actions(batch, rng)?;
        let mut critic_losses = Vec::with_capacity(self.critics.len());
        for k in 0..self.critics.len() {
            critic_losses.push(to_f64(self.critic_update(k, batch, &next, true)?));
        }
        let objective = self.policy_update(batch, rng)?;
        self.critic_rounds += 1;
        Ok(RoundStats { critic_losses, policy_objective: Some(to_f64(objective)) })
    }

    /// TD3 round: critic steps on smoothed targets; every `policy_delay`
    /// rounds an actor step followed by soft updates of all targets.
    pub fn td3_update<R: Rng + ?Sized>(&mut self, batch: &Batch<T>, rng: &mut R) -> Result<RoundStats> {
        let next = self.td3_next_actions(batch, rng)?;
        let mut critic_losses = Vec::with_capacity(self.critics.len());
        for k in 0..self.critics.len() {
            critic_losses.push(to_f64(self.critic_update(k, batch, &next, false)?));
        }
        self.critic_rounds += 1;
        let mut policy_objective = None;
        if self.critic_rounds % self.config.td3.policy_delay == 0 {
            let (objective, grads) = self.td3_objective_and_grad(&batch.states, batch.len)?;
            if !objective.is_finite() {
                return Err(Error::NonFinite("policy objective".into()));
            }
            let tau = T::lit(self.config.tau);
            let Actor::Deterministic { online, target } = &mut self.actor else { unreachable!() };
            self.actor_optim.step(online.net.params_mut(), &grads)?;
            crate::neural::soft_update(target.net.params_mut(), online.net.params(), tau);
            for member in &mut self.critics.members {
                member.soft_update_targets(tau);
            }
            policy_objective = Some(to_f64(objective));
        }
        Ok(RoundStats { critic_losses, policy_objective })
    }

    /// Dispatches one update round to the configured variant.
    pub fn update_round<R: Rng + ?Sized>(&mut self, batch: &Batch<T>, rng: &mut R) -> Result<RoundStats> {
        match self.config.variant {
            Variant::Sac => self.sac_round(batch, rng),
            Variant::Td3 => self.td3_update(batch, rng),
        }
    }

    /// Multiplier step from the most recent transitions. The success slot is
    /// estimated per completed episode, the behaviors per step.
    pub fn update_multipliers(&mut self, buffer: &ReplayBuffer<T>) -> Result<Option<RateEstimate>> {
        if self.constraints.slots() == 0 || buffer.is_empty() {
            return Ok(None);
        }
        let n = self.config.multiplier_batch.min(buffer.len());
        let events = buffer.last_n_events(n)?;
        let rates = if self.constraints.has_success() {
            RateEstimate::with_episodic_slot(&events, &buffer.last_n_episode_ends(n)?, self.constraints.k())?
        } else {
            RateEstimate::from_batch(&events)?
        };
        self.multipliers.update(&rates, &self.constraints.specs_vec())?;
        Ok(Some(rates))
    }

    /// Changes the threshold of multiplier slot `slot`.
    pub fn set_threshold(&mut self, slot: usize, threshold: f64) -> Result<()> {
        let k = self.constraints.k();
        let spec = if slot < k {
            self.constraints.behaviors.get_mut(slot)
        } else if slot == k {
            self.constraints.success.as_mut()
        } else {
            None
        };
        let spec = spec.ok_or_else(|| Error::Config(format!("no multiplier slot {slot}")))?;
        spec.threshold = threshold;
        spec.validate()
    }
}
