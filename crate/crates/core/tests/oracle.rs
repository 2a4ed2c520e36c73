use crl_core::multipliers::MultiplierMode;
use crl_core::oracle::{
    dual_minimize, exact_return, gda_reference, normalizer, occupancy, parse_cmdp, random_cmdp, random_policy,
    write_cmdp, DualGrid, GdaConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn chain() -> crl_core::oracle::TabularCMDP {
    parse_cmdp(include_str!("../data/chain5.cmdp")).unwrap()
}

#[test]
fn chain_file_round_trips() {
    let m = chain();
    assert_eq!((m.states(), m.actions(), m.num_constraints()), (5, 2, 1));
    assert_eq!(parse_cmdp(&write_cmdp(&m)).unwrap(), m);
}

#[test]
fn chain_dual_optimum_is_a_mixture() {
    let m = chain();
    let sol = dual_minimize(&m, &DualGrid::linear(2.0, 201)).unwrap();
    assert!((sol.lambda[0] - 0.27).abs() < 1e-12, "{:?}", sol.lambda);
    assert!((sol.dual_value - 0.098629).abs() < 1e-5, "{}", sol.dual_value);
    let primal = sol.primal.unwrap();
    assert!(primal.mixed);
    assert!(primal.profile.costs[0] <= 0.1 + 1e-9);
    assert!(primal.profile.reward <= sol.dual_value + 1e-9);
    assert!((sol.dual_value - primal.profile.reward) / sol.dual_value < 1e-3);
}

#[test]
fn averaged_gda_matches_the_dual_oracle() {
    let m = chain();
    let oracle = dual_minimize(&m, &DualGrid::linear(2.0, 201)).unwrap().primal.unwrap();
    let cfg = GdaConfig {
        steps: 20_000,
        policy_lr: 5.0,
        multiplier_lr: 0.5,
        mode: MultiplierMode::Unnormalized,
        ..GdaConfig::default()
    };
    let traj = gda_reference(&m, &cfg).unwrap();
    assert!(traj.diverged_at.is_none());
    let (_, avg) = traj.averaged(&m, 10_000).unwrap();
    let gap = (oracle.profile.reward - avg.reward).abs() / oracle.profile.reward;
    assert!(gap <= 0.02, "return {} vs oracle {}", avg.reward, oracle.profile.reward);
    assert!(avg.costs[0] <= 0.1 + 0.01, "cost {}", avg.costs[0]);
}

#[test]
fn occupancy_identity_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..10 {
        let m = random_cmdp(&mut rng, 4, 3, 2, 0.95, 0.2);
        for _ in 0..10 {
            let pi = random_policy(&mut rng, 4, 3);
            let x = occupancy(&m, &pi).unwrap();
            for k in 0..2 {
                let direct = exact_return(&m, &pi, m.cost(k)).unwrap();
                let via: f64 = x.iter().zip(m.cost(k)).map(|(a, b)| a * b).sum::<f64>() * normalizer(m.gamma());
                assert!((direct - via).abs() <= 1e-10, "{direct} vs {via}");
            }
        }
    }
}
