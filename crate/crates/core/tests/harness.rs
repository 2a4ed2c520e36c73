use crl_core::arena::{self, ArenaConfig, ArenaEnv};
use crl_core::env::Environment;
use crl_core::eval::EvalReport;
use crl_core::events::{ConstraintSpec, Indicator};
use crl_core::harness::{
    classify_feasible, presets, run_experiment, run_reward_engineering_grid, GridSpec,
    PenalizedEnv, RunConfig,
};
use proptest::prelude::*;

fn tiny(mut cfg: RunConfig) -> RunConfig {
    cfg.trainer.total_steps = 300;
    cfg.trainer.random_steps = 100;
    cfg.trainer.warmup_steps = 100;
    cfg.trainer.batch_size = 16;
    cfg.trainer.update_every = 50;
    cfg.trainer.gradient_steps = 1;
    cfg.trainer.multiplier_every = 100;
    cfg.trainer.multiplier_batch = 100;
    cfg.trainer.eval_every = 100;
    cfg.trainer.eval_episodes = 2;
    cfg.trainer.policy_hidden = vec![8];
    cfg.trainer.critic_hidden = vec![8];
    cfg.trainer.buffer_capacity = 1000;
    cfg.grid.eval_episodes = 2;
    cfg
}

#[test]
fn zero_weights_leave_the_reward_unchanged_and_w_is_subtracted_exactly() {
    let lava = ConstraintSpec::upper("in_lava", 0.01, Indicator::direct(arena::IN_LAVA));
    let look = ConstraintSpec::upper("nl", 0.1, Indicator::direct(arena::NOT_LOOKING));
    let base = ArenaEnv::new(ArenaConfig::desk()).unwrap();
    let mut plain = base.clone();
    let mut zero = PenalizedEnv { inner: base.clone(), penalties: vec![(lava.clone(), 0.0), (look.clone(), 0.0)] };
    let mut two = PenalizedEnv { inner: base, penalties: vec![(lava.clone(), 2.0), (look.clone(), 0.5)] };
    let mut active = 0;
    for seed in 0..5u64 {
        plain.reset(seed).unwrap();
        zero.reset(seed).unwrap();
        two.reset(seed).unwrap();
        for t in 0..60 {
            let a = [(t as f64 * 0.37).sin(), 0.9, 0.3, -1.0, -1.0];
            let p = plain.step(&a).unwrap();
            let z = zero.step(&a).unwrap();
            let w = two.step(&a).unwrap();
            assert_eq!(p, z);
            let expected = p.reward
                - 2.0 * f64::from(u8::from(lava.indicator.read(&p.events)))
                - 0.5 * f64::from(u8::from(look.indicator.read(&p.events)));
            assert_eq!(w.reward, expected);
            if lava.indicator.read(&p.events) {
                active += 1;
            }
            if p.done || p.truncated {
                break;
            }
        }
    }
    assert!(active > 0, "the scripted walk never crossed the lava band");
}

fn rates() -> impl Strategy<Value = (f64, Vec<f64>)> {
    (0.0..=1.0f64, prop::collection::vec(0.0..=1.0f64, 3))
}

proptest! {
    #[test]
    fn worsening_a_rate_never_upgrades_the_class(
        (success, r) in rates(),
        k in 0usize..3,
        worse in 0.0..=1.0f64,
        floor in 0.0..=1.0f64,
    ) {
        let specs = [
            ConstraintSpec::upper("a", 0.1, Indicator::direct(0)),
            ConstraintSpec::upper("b", 0.4, Indicator::direct(1)),
            ConstraintSpec::lower("c", 0.6, Indicator::direct(2)),
        ];
        let before = EvalReport { episodes: 1, steps: 1, success_rate: success, rates: r.clone(), return_mean: 0.0 };
        let mut after = before.clone();
        // upper bounds worsen upward, the lower bound worsens downward
        after.rates[k] = if k == 2 { r[k] * worse } else { r[k] + (1.0 - r[k]) * worse };
        prop_assert!(classify_feasible(&after, &specs, floor) <= classify_feasible(&before, &specs, floor));
        let mut slower = before.clone();
        slower.success_rate *= worse;
        prop_assert!(classify_feasible(&slower, &specs, floor) <= classify_feasible(&before, &specs, floor));
    }
}

#[test]
fn seven_by_seven_grid_has_49_rows_and_is_worker_independent() {
    let mut cfg = tiny(presets::desk_grid(&["in_lava", "not_looking_at_marker"]));
    cfg.grid.weights = vec![0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 10.0];
    let grid = GridSpec::from_config(&cfg).unwrap();
    let one = run_reward_engineering_grid(&grid, 1).unwrap();
    let csv = one.csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "w_in_lava,w_not_looking_at_marker,return_mean,success_rate,rate_in_lava,rate_not_looking_at_marker,class");
    assert_eq!(lines.len(), 50);
    assert!(one.cells.iter().all(|c| c.outcome.is_ok()));
    let mut small = grid.clone();
    small.weights = vec![vec![0.0, 1.0]; 2];
    let a = run_reward_engineering_grid(&small, 1).unwrap().csv();
    let b = run_reward_engineering_grid(&small, 3).unwrap().csv();
    assert_eq!(a, b);
    let rows_a: Vec<&str> = a.lines().skip(1).collect();
    let rows_big: Vec<&str> = lines[1..].to_vec();
    assert_eq!(rows_a[0], rows_big[0]);
}

#[test]
fn five_seeds_write_five_csvs_and_one_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(presets::desk());
    cfg.out_dir = dir.path().to_path_buf();
    let res = run_experiment(&cfg, 2, true).unwrap();
    assert_eq!(res.runs.len(), 5);
    for s in 1..=5 {
        assert!(dir.path().join(format!("seed_{s}.csv")).exists());
        assert!(dir.path().join("checkpoints").join(format!("seed_{s}")).join("manifest.txt").exists());
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    for f in ["config.txt", "return.svg", "success.svg", "rates.svg", "lambda.svg"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let r = &res.summary[2];
    let mean: f64 = res.runs.iter().map(|x| x.rows[2].return_mean).sum::<f64>() / 5.0;
    assert!((r.mean[0] - mean).abs() <= 1e-12 * mean.abs().max(1.0));
    let again = RunConfig::parse(&std::fs::read_to_string(dir.path().join("config.txt")).unwrap()).unwrap();
    assert_eq!(again, cfg);
    let (report, step) = crl_core::harness::evaluate_checkpoint(&cfg, 3, 2).unwrap();
    assert_eq!(step, 300);
    assert_eq!(report.success_rate, res.runs[2].rows[2].success_rate);
    assert_eq!(report.rates, res.runs[2].rows[2].rates);

    let mut again = cfg.clone();
    again.out_dir = dir.path().join("again");
    let res2 = run_experiment(&again, 1, false).unwrap();
    for (a, b) in res.runs.iter().zip(&res2.runs) {
        assert_eq!(a.csv(), b.csv());
    }
}

#[test]
fn unconstrained_runs_have_no_multiplier_columns() {
    let mut cfg = tiny(presets::desk_unconstrained());
    cfg.seeds = vec![4];
    let res = run_experiment(&cfg, 1, false).unwrap();
    let header = res.runs[0].csv().lines().next().unwrap().to_string();
    assert_eq!(header, "step,return_mean,success_rate,rate_not_looking_at_marker,critic_loss_0,policy_objective");
    assert!(!header.contains("lambda"));
}

#[test]
fn stability_switch_lands_on_the_configured_step() {
    let mut cfg = tiny(presets::desk_stability());
    cfg.trainer.total_steps = 400;
    cfg.trainer.multiplier_every = 10;
    cfg.trainer.multiplier_batch = 10;
    let res = crl_core::harness::run_stability_experiment(&cfg, 1, 2, None).unwrap();
    assert_eq!(res.switch_step, 300);
    for run in [&res.normalized, &res.unnormalized] {
        assert!(run.error.is_none());
        assert_eq!(run.lambda_trace.len(), 40);
    }
    assert!(res.normalized.lambda_trace.iter().all(|p| p.weights.iter().all(|w| (0.0..=1.0).contains(w))));
    // before the switch the constraint cannot be met, so the unnormalized
    // multiplier rises on every update
    let pre: Vec<f64> = res.unnormalized.lambda_trace.iter().filter(|p| p.step <= 300).map(|p| p.weights[1]).collect();
    assert!(pre.windows(2).all(|w| w[1] > w[0]), "{pre:?}");
}
