use crl_core::agent::*;
use crl_core::arena::{self, ArenaConfig, ArenaEnv};
use crl_core::buffer::{Batch, ReplayBuffer};
use crl_core::events::{ConstraintSet, ConstraintSpec, EventVector, Indicator};
use crl_core::multipliers::{MultiplierMode, Multipliers};
use crl_core::neural::NetSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_config() -> TrainerConfig {
    TrainerConfig {
        policy_hidden: vec![8],
        critic_hidden: vec![8],
        batch_size: 16,
        update_every: 10,
        gradient_steps: 2,
        warmup_steps: 50,
        random_steps: 100,
        multiplier_every: 100,
        multiplier_batch: 100,
        eval_every: 250,
        eval_episodes: 2,
        buffer_capacity: 10_000,
        total_steps: 500,
        ..TrainerConfig::default()
    }
}

fn two_constraints() -> ConstraintSet {
    ConstraintSet::new(
        vec![
            ConstraintSpec::upper("in_lava", 0.01, Indicator::direct(arena::IN_LAVA)),
            ConstraintSpec::upper("not_looking_at_marker", 0.1, Indicator::direct(arena::NOT_LOOKING)),
        ],
        Some(ConstraintSpec::lower("reached_goal", 0.99, Indicator::direct(arena::REACHED_GOAL))),
    )
    .unwrap()
}

fn desk_env() -> ArenaEnv {
    ArenaEnv::new(ArenaConfig::desk()).unwrap()
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, od: usize, ad: usize, ne: usize) -> Batch<f64> {
    let mut buf = ReplayBuffer::<f64>::new(n, od, ad, ne).unwrap();
    for i in 0..n {
        let s: Vec<f64> = (0..od).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s2: Vec<f64> = (0..od).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a: Vec<f64> = (0..ad).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ev = EventVector::new((0..ne).map(|_| rng.random::<bool>()).collect());
        buf.push(&s, &a, rng.random_range(-1.0..1.0), &s2, i % 3 == 0, false, &ev).unwrap();
    }
    buf.gather(&(0..n).collect::<Vec<_>>())
}

fn small_agent(variant: Variant, seed: u64) -> Agent<f64> {
    let cfg = TrainerConfig { variant, ..tiny_config() };
    Agent::new(4, 2, two_constraints(), cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn terminal_targets_equal_rewards() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let agent = small_agent(Variant::Sac, 1);
    let batch = random_batch(&mut rng, 12, 4, 2, 3);
    let next = agent.sac_next_actions(&batch, &mut rng).unwrap();
    for k in 0..agent.critics.len() {
        let y = agent.critic_targets(k, &batch, &next).unwrap();
        let r = if k == 0 { batch.rewards.clone() } else { batch.event_column(k - 1) };
        for i in 0..batch.len {
            if batch.not_done[i] == 0.0 {
                assert_eq!(y[i], r[i]);
            }
        }
    }
}

#[test]
fn hand_computed_critic_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut agent = small_agent(Variant::Sac, 2);
    let batch = random_batch(&mut rng, 1, 4, 2, 3);
    let next = agent.sac_next_actions(&batch, &mut rng).unwrap();
    let m = &agent.critics.members[0];
    let q_t: Vec<f64> = m.target.iter().map(|n| n.predict(&next.next_sa).unwrap()[0]).collect();
    let sa: Vec<f64> = batch.states.iter().chain(&batch.actions).copied().collect();
    let q: Vec<f64> = m.online.iter().map(|n| n.predict(&sa).unwrap()[0]).collect();
    let y = batch.rewards[0] + batch.not_done[0] * 0.9 * (q_t[0].min(q_t[1]) + next.entropy_bonus[0]);
    let want = ((q[0] - y).powi(2) + (q[1] - y).powi(2)) / 2.0;
    let loss = agent.critic_update(0, &batch, &next, true).unwrap();
    assert!((loss - want).abs() < 1e-12, "{loss} vs {want}");
}

#[test]
fn zero_events_leave_only_the_bootstrap_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let agent = small_agent(Variant::Sac, 3);
    let mut batch = random_batch(&mut rng, 8, 4, 2, 3);
    batch.events.iter_mut().for_each(|e| *e = 0.0);
    let next = agent.sac_next_actions(&batch, &mut rng).unwrap();
    for k in 1..agent.critics.len() {
        let y = agent.critic_targets(k, &batch, &next).unwrap();
        let mq = agent.critics.members[k].min_q(NetSet::Target, &next.next_sa, batch.len).unwrap();
        for i in 0..batch.len {
            assert_eq!(y[i], batch.not_done[i] * 0.9 * (mq.values[i] + next.entropy_bonus[i]));
        }
    }
}

#[test]
fn entropy_switch_removes_bonus_from_constraint_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = TrainerConfig { entropy_in_constraint_targets: false, ..tiny_config() };
    let agent = Agent::<f64>::new(4, 2, two_constraints(), cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let mut batch = random_batch(&mut rng, 8, 4, 2, 3);
    batch.events.iter_mut().for_each(|e| *e = 0.0);
    let next = agent.sac_next_actions(&batch, &mut rng).unwrap();
    let y = agent.critic_targets(1, &batch, &next).unwrap();
    let mq = agent.critics.members[1].min_q(NetSet::Target, &next.next_sa, batch.len).unwrap();
    for i in 0..batch.len {
        assert_eq!(y[i], batch.not_done[i] * 0.9 * mq.values[i]);
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

#[test]
fn sac_objective_gradient_matches_finite_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut agent = small_agent(Variant::Sac, 4);
    if let Multipliers::Normalized(m) = &mut agent.multipliers {
        m.z = vec![0.3, -0.4, 1.1];
    }
    let batch = random_batch(&mut rng, 5, 4, 2, 3);
    let noise: Vec<f64> = (0..10).map(|_| rng.random_range(-1.5..1.5)).collect();
    let (_, grad) = agent.sac_objective_and_grad(&batch.states, 5, &noise).unwrap();
    let Actor::Gaussian(p) = &agent.actor else { unreachable!() };
    let base = p.net.params().to_vec();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let eval = |delta: f64, agent: &mut Agent<f64>| {
            let Actor::Gaussian(p) = &mut agent.actor else { unreachable!() };
            p.net.params_mut()[i] = base[i] + delta;
            agent.sac_objective_and_grad(&batch.states, 5, &noise).unwrap().0
        };
        let fd = (eval(h, &mut agent) - eval(-h, &mut agent)) / (2.0 * h);
        eval(0.0, &mut agent);
        // grad is of the loss, i.e. the negated objective
        worst = worst.max(relative_error(-fd, grad[i]));
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn td3_objective_gradient_matches_finite_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let agent0 = small_agent(Variant::Td3, 5);
    let mut agent = agent0.clone();
    let batch = random_batch(&mut rng, 5, 4, 2, 3);
    let (_, grad) = agent.td3_objective_and_grad(&batch.states, 5).unwrap();
    let Actor::Deterministic { online, .. } = &agent0.actor else { unreachable!() };
    let base = online.net.params().to_vec();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut eval = |delta: f64| {
            let Actor::Deterministic { online, .. } = &mut agent.actor else { unreachable!() };
            online.net.params_mut()[i] = base[i] + delta;
            agent.td3_objective_and_grad(&batch.states, 5).unwrap().0
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        eval(0.0);
        worst = worst.max(relative_error(-fd, grad[i]));
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn bootstrap_weight_applies_to_reward_critic() {
    let mut agent = small_agent(Variant::Sac, 6);
    // lambda_0 = 0.1, lambda_success = 0.6
    let (l0, l1, l2, l3) = (0.1f64, 0.2f64, 0.1f64, 0.6f64);
    if let Multipliers::Normalized(m) = &mut agent.multipliers {
        m.z = vec![(l1 / l0).ln(), (l2 / l0).ln(), (l3 / l0).ln()];
    }
    let w = agent.objective_weights();
    assert!((w[0] - 0.6).abs() < 1e-12);
    assert!((w[1] + 0.2).abs() < 1e-12 && (w[2] + 0.1).abs() < 1e-12 && (w[3] - 0.6).abs() < 1e-12);
    agent.config.bootstrap = false;
    assert!((agent.objective_weights()[0] - 0.1).abs() < 1e-12);
}

#[test]
fn unconstrained_agent_weights_reward_by_one() {
    let cfg = TrainerConfig { success_enabled: false, ..tiny_config() };
    let agent = Agent::<f64>::new(4, 2, ConstraintSet::unconstrained(), cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(agent.objective_weights(), vec![1.0]);
    assert_eq!(agent.critics.len(), 1);
}

#[test]
fn disabling_success_drops_its_slot() {
    let cfg = TrainerConfig { success_enabled: false, ..tiny_config() };
    let agent = Agent::<f64>::new(4, 2, two_constraints(), cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(agent.constraints.slots(), 2);
    assert_eq!(agent.critics.len(), 3);
}

#[test]
fn critic_update_touches_only_its_ensemble() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut agent = small_agent(Variant::Sac, 7);
    let batch = random_batch(&mut rng, 16, 4, 2, 3);
    let next = agent.sac_next_actions(&batch, &mut rng).unwrap();
    for k in 0..agent.critics.len() {
        let before = agent.critics.members.clone();
        agent.critic_update(k, &batch, &next, true).unwrap();
        for (j, (b, a)) in before.iter().zip(&agent.critics.members).enumerate() {
            if j == k {
                assert_ne!(b, a);
            } else {
                assert_eq!(b, a);
            }
        }
    }
}

#[test]
fn deterministic_action_is_repeatable_and_stochastic_is_bounded() {
    let agent = small_agent(Variant::Sac, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let obs = [0.3, -0.2, 0.9, 0.0];
    assert_eq!(
        agent.act(&obs, ActMode::Deterministic, &mut rng).unwrap(),
        agent.act(&obs, ActMode::Deterministic, &mut rng).unwrap()
    );
    for _ in 0..500 {
        let a = agent.act(&obs, ActMode::Stochastic, &mut rng).unwrap();
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
    let td3 = small_agent(Variant::Td3, 8);
    for _ in 0..500 {
        let a = td3.act(&obs, ActMode::Stochastic, &mut rng).unwrap();
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn td3_actor_changes_every_second_round() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut agent = small_agent(Variant::Td3, 9);
    let batch = random_batch(&mut rng, 16, 4, 2, 3);
    for round in 1..=6 {
        let before = agent.actor.clone();
        let stats = agent.td3_update(&batch, &mut rng).unwrap();
        let changed = before != agent.actor;
        assert_eq!(changed, round % 2 == 0, "round {round}");
        assert_eq!(stats.policy_objective.is_some(), round % 2 == 0);
    }
}

#[test]
fn td3_zero_noise_single_critic_is_plain_deterministic_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cfg = TrainerConfig { variant: Variant::Td3, success_enabled: false, ..tiny_config() };
    cfg.td3.target_noise = 0.0;
    let agent = Agent::<f64>::new(4, 2, ConstraintSet::unconstrained(), cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let batch = random_batch(&mut rng, 6, 4, 2, 0);
    let next = agent.td3_next_actions(&batch, &mut rng).unwrap();
    let y = agent.critic_targets(0, &batch, &next).unwrap();
    let Actor::Deterministic { target, .. } = &agent.actor else { unreachable!() };
    for i in 0..6 {
        let s2 = &batch.next_states[i * 4..(i + 1) * 4];
        let a2 = target.act(s2).unwrap();
        let sa: Vec<f64> = s2.iter().chain(&a2).copied().collect();
        let t = &agent.critics.members[0].target;
        let q = t[0].predict(&sa).unwrap()[0].min(t[1].predict(&sa).unwrap()[0]);
        assert!((y[i] - (batch.rewards[i] + batch.not_done[i] * 0.9 * q)).abs() < 1e-12);
    }
}

fn tracked() -> Vec<ConstraintSpec> {
    two_constraints().behaviors
}

#[test]
fn zero_steps_gives_no_metrics() {
    let cfg = TrainerConfig { total_steps: 0, ..tiny_config() };
    let mut t = Trainer::<f32, _>::new(desk_env(), two_constraints(), tracked(), cfg, 1).unwrap();
    t.run().unwrap();
    assert!(t.rows.is_empty() && t.lambda_trace.is_empty());
    assert_eq!(t.step_count(), 0);
}

#[test]
fn multiplier_cadence_and_exploration() {
    let cfg = TrainerConfig { total_steps: 1050, ..tiny_config() };
    let mut t = Trainer::<f32, _>::new(desk_env(), two_constraints(), tracked(), cfg, 2).unwrap();
    t.run().unwrap();
    assert_eq!(t.lambda_trace.len(), 1050 / 100);
    assert!(t.lambda_trace.iter().all(|p| p.step % 100 == 0));
    assert_eq!(t.rows.len(), 1050 / 250);
    for p in &t.lambda_trace {
        assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
    // the first 100 actions come straight from the exploration stream
    let mut rng = crl_core::seeding::stream_rng(2, crl_core::seeding::Stream::Explore);
    for i in 0..100 {
        let want = uniform_action(&mut rng, arena::ACTION_DIM);
        let got: Vec<f64> = t.buffer.get(i).unwrap().action.iter().map(|&v| v as f64).collect();
        let want32: Vec<f64> = want.iter().map(|&v| v as f32 as f64).collect();
        assert_eq!(got, want32);
    }
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let mut t = Trainer::<f32, _>::new(desk_env(), two_constraints(), tracked(), tiny_config(), 5).unwrap();
        t.run().unwrap();
        (t.csv(), t.lambda_trace.clone())
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert!(a.lines().next().unwrap().contains("lambda_3"));
}

#[test]
fn unconstrained_trainer_reproduces_plain_sac() {
    let cfg = TrainerConfig { success_enabled: false, total_steps: 750, ..tiny_config() };
    let mut t = Trainer::<f32, _>::new(desk_env(), ConstraintSet::unconstrained(), tracked(), cfg.clone(), 9).unwrap();
    t.run().unwrap();
    let (schema, rows) = train_plain_sac::<f32, _>(desk_env(), &tracked(), &cfg, 9).unwrap();
    let plain = metrics_csv(&schema, &rows);
    assert_eq!(t.csv(), plain);
    assert!(!plain.contains("lambda"));
    assert_eq!(rows.len(), 3);
}

#[test]
fn unnormalized_multiplier_grows_on_violation() {
    let impossible = ConstraintSet::new(
        vec![ConstraintSpec::upper("on_ground", 0.0, Indicator::inverted(arena::NOT_ON_GROUND))],
        None,
    )
    .unwrap();
    let cfg = TrainerConfig {
        multiplier_mode: MultiplierMode::Unnormalized,
        success_enabled: false,
        total_steps: 600,
        ..tiny_config()
    };
    let mut t = Trainer::<f32, _>::new(desk_env(), impossible, vec![], cfg, 3).unwrap();
    t.run().unwrap();
    let lam: Vec<f64> = t.lambda_trace.iter().map(|p| p.weights[1]).collect();
    assert!(lam.windows(2).all(|w| w[1] > w[0]), "{lam:?}");
}

#[test]
fn threshold_switch_happens_at_requested_step() {
    let cfg = TrainerConfig {
        total_steps: 300,
        threshold_switch: Some(ThresholdSwitch { step: 150, slot: 1, threshold: 0.5 }),
        ..tiny_config()
    };
    let mut t = Trainer::<f32, _>::new(desk_env(), two_constraints(), tracked(), cfg, 4).unwrap();
    for _ in 0..149 {
        t.advance().unwrap();
    }
    assert_eq!(t.agent.constraints.behaviors[1].threshold, 0.1);
    t.advance().unwrap();
    assert_eq!(t.agent.constraints.behaviors[1].threshold, 0.5);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::<f32, _>::new(desk_env(), two_constraints(), tracked(), tiny_config(), 6).unwrap();
    t.run().unwrap();
    save_checkpoint(dir.path(), &t.agent, t.step_count()).unwrap();
    let (loaded, step) = load_checkpoint::<f32>(
        dir.path(),
        arena::OBS_DIM,
        arena::ACTION_DIM,
        two_constraints(),
        tiny_config(),
    )
    .unwrap();
    assert_eq!(step, 500);
    assert_eq!(loaded.actor, t.agent.actor);
    assert_eq!(loaded.multipliers.parameters(), t.agent.multipliers.parameters());
    for (a, b) in loaded.critics.members.iter().zip(&t.agent.critics.members) {
        assert_eq!(a.online, b.online);
        assert_eq!(a.target, b.target);
    }
    let other = TrainerConfig { alpha: 0.05, ..tiny_config() };
    assert!(load_checkpoint::<f32>(dir.path(), arena::OBS_DIM, arena::ACTION_DIM, two_constraints(), other).is_err());
}
