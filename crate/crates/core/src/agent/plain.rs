//! Unconstrained soft actor-critic, written independently of [`Agent`].
//!
//! It serves as the reference the constrained learner must reproduce exactly
//! when it has no constraints.

use super::config::TrainerConfig;
use super::metrics::{MetricsRow, MetricsSchema};
use super::trainer::{episode_seed, eval_seeds, uniform_action};
use crate::buffer::ReplayBuffer;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::events::{ConstraintSpec, EventVector};
use crate::neural::{concat_rows, standard_normal, AdamState, GaussianPolicy, NetSet, TwinCritic};
use crate::scalar::Scalar;
use crate::seeding::{stream_rng, Stream};

pub fn train_plain_sac<T: Scalar, E: Environment + Clone>(
    mut env: E,
    tracked: &[ConstraintSpec],
    cfg: &TrainerConfig,
    seed: u64,
) -> Result<(MetricsSchema, Vec<MetricsRow>)> {
    cfg.validate()?;
    let (od, ad) = (env.obs_dim(), env.act_dim());
    let lr = T::lit(cfg.lr);
    let mut init = stream_rng(seed, Stream::Init);
    let mut policy = GaussianPolicy::<T>::new(od, ad, &cfg.policy_hidden, &mut init)?;
    let mut critic = TwinCritic::<T>::new(od, ad, &cfg.critic_hidden, lr, &mut init)?;
    let mut policy_optim = AdamState::new(policy.net.num_params(), lr);
    let mut buffer = ReplayBuffer::<T>::new(cfg.buffer_capacity, od, ad, 0)?;
    let mut explore = stream_rng(seed, Stream::Explore);
    let mut update = stream_rng(seed, Stream::Update);
    let mut eval_env = env.clone();
    let no_events = EventVector::zeros(0);

    let alpha = T::lit(cfg.alpha);
    let gamma = T::lit(cfg.gamma);
    let two = T::lit(2.0);
    let schema = MetricsSchema { rate_names: tracked.iter().map(|s| s.name.clone()).collect(), lambdas: 0, critics: 1 };
    let mut rows = Vec::new();
    let mut losses = vec![f64::NAN];
    let mut objective_log = f64::NAN;
    let mut episode = 0u64;
    let mut obs = env.reset(episode_seed(seed, 0))?;

    for step in 1..=cfg.total_steps {
        let action = if step - 1 < cfg.random_steps {
            uniform_action(&mut explore, ad)
        } else {
            let o: Vec<T> = obs.iter().map(|&v| T::lit(v)).collect();
            policy.sample(&o, &mut explore)?.0.into_iter().map(|v| v.to_f64_lossy()).collect()
        };
        let out = env.step(&action)?;
        let s: Vec<T> = obs.iter().map(|&v| T::lit(v)).collect();
        let s2: Vec<T> = out.obs.iter().map(|&v| T::lit(v)).collect();
        let a: Vec<T> = action.iter().map(|&v| T::lit(v)).collect();
        buffer.push(&s, &a, T::lit(out.reward), &s2, out.done, out.truncated, &no_events)?;
        if out.done || out.truncated {
            episode += 1;
            obs = env.reset(episode_seed(seed, episode))?;
        } else {
            obs = out.obs;
        }

        if step % cfg.update_every == 0 && step >= cfg.warmup_steps && buffer.len() >= cfg.batch_size {
            for _ in 0..cfg.gradient_steps {
                let b = buffer.sample_batch(cfg.batch_size, &mut update)?;
                let n = b.len;
                let nf = T::lit(n as f64);

                // soft Bellman targets
                let next = policy.sample_batch(&b.next_states, n, &mut update)?;
                let next_sa = concat_rows(&b.next_states, od, &next.actions, ad, n);
                let q_next = critic.min_q(NetSet::Target, &next_sa, n)?;
                let y: Vec<T> = (0..n)
                    .map(|i| b.rewards[i] + b.not_done[i] * gamma * (q_next.values[i] + -(alpha * next.log_probs[i])))
                    .collect();
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Halted { step, reason: "non-finite critic targets".into() });
                }
                let sa = concat_rows(&b.states, od, &b.actions, ad, n);
                let mut loss = T::zero();
                for j in 0..2 {
                    let cache = critic.online[j].forward(&sa, n)?;
                    let diff: Vec<T> = cache.output().iter().zip(&y).map(|(&q, &t)| q - t).collect();
                    let mse = diff.iter().map(|&d| d * d).sum::<T>() / nf;
                    loss += mse;
                    let upstream: Vec<T> = diff.iter().map(|&d| two * d / nf).collect();
                    let mut g = critic.online[j].zero_grads();
                    critic.online[j].backward(&cache, &upstream, Some(&mut g), false)?;
                    critic.optim[j].step(critic.online[j].params_mut(), &g)?;
                }
                critic.soft_update_targets(T::lit(cfg.tau));
                losses = vec![(loss / two).to_f64_lossy()];

                // reparameterized actor step
                let noise = standard_normal(&mut update, n * ad);
                let smp = policy.sample_with_noise(&b.states, n, &noise)?;
                let sa_pi = concat_rows(&b.states, od, &smp.actions, ad, n);
                let q = critic.min_q(NetSet::Online, &sa_pi, n)?;
                let inv_n = T::one() / nf;
                let objective = smp.log_probs.iter().zip(&q.values).map(|(&lp, &v)| -(alpha * lp) + v).sum::<T>() * inv_n;
                if !objective.is_finite() {
                    return Err(Error::Halted { step, reason: "non-finite policy objective".into() });
                }
                let dx = critic.min_q_input_grad(NetSet::Online, &q, &vec![-inv_n; n])?;
                let d_actions: Vec<T> =
                    (0..n * ad).map(|i| dx[(i / ad) * (od + ad) + od + i % ad]).collect();
                let mut g = policy.net.zero_grads();
                policy.backward(&smp, &d_actions, &vec![alpha * inv_n; n], &mut g)?;
                policy_optim.step(policy.net.params_mut(), &g)?;
                objective_log = objective.to_f64_lossy();
            }
        }

        if step % cfg.eval_every == 0 {
            let seeds = eval_seeds(seed, cfg.eval_episodes);
            let report = evaluate(&mut eval_env, &seeds, tracked, |o| {
                let o: Vec<T> = o.iter().map(|&v| T::lit(v)).collect();
                Ok(policy.mode(&o)?.into_iter().map(|v| v.to_f64_lossy()).collect())
            })?;
            rows.push(MetricsRow {
                step,
                return_mean: report.return_mean,
                success_rate: report.success_rate,
                rates: report.rates,
                lambdas: vec![],
                critic_losses: losses.clone(),
                policy_objective: objective_log,
            });
        }
    }
    Ok((schema, rows))
}
