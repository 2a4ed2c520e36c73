//! Agent checkpoints: a network bundle plus a text manifest.
//!
//! `agent.ckpt` holds the actor (and its target for the deterministic actor)
//! followed by each critic's two online and two target networks.
//! `manifest.txt` is `key = value` lines: `step`, `config_hash`, `variant`,
//! `networks`, `multiplier_params`, `lambda`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::learner::{Actor, Agent};
use crate::error::{Error, Result};
use crate::events::ConstraintSet;
use crate::neural::checkpoint::{load_bundle, save_bundle};
use crate::neural::Mlp;
use crate::scalar::Scalar;
use crate::seeding::fnv1a;

use super::config::TrainerConfig;

pub const BUNDLE_FILE: &str = "agent.ckpt";
pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn config_hash(config: &TrainerConfig, constraints: &ConstraintSet) -> u64 {
    fnv1a(format!("{}|{:?}", config.canonical(), constraints).as_bytes())
}

fn join<T: Scalar>(v: impl IntoIterator<Item = T>) -> String {
    v.into_iter().map(|x| format!("{:?}", x.to_f64_lossy())).collect::<Vec<_>>().join(",")
}

fn networks<T>(agent: &Agent<T>) -> Vec<&Mlp<T>> {
    let mut nets = match &agent.actor {
        Actor::Gaussian(p) => vec![&p.net],
        Actor::Deterministic { online, target } => vec![&online.net, &target.net],
    };
    for m in &agent.critics.members {
        nets.extend([&m.online[0], &m.online[1], &m.target[0], &m.target[1]]);
    }
    nets
}

fn networks_mut<T>(agent: &mut Agent<T>) -> Vec<&mut Mlp<T>> {
    let mut nets = match &mut agent.actor {
        Actor::Gaussian(p) => vec![&mut p.net],
        Actor::Deterministic { online, target } => vec![&mut online.net, &mut target.net],
    };
    for m in &mut agent.critics.members {
        let [o0, o1] = &mut m.online;
        let [t0, t1] = &mut m.target;
        nets.extend([o0, o1, t0, t1]);
    }
    nets
}

pub fn save_checkpoint<T: Scalar>(dir: &Path, agent: &Agent<T>, step: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let nets = networks(agent);
    save_bundle(&dir.join(BUNDLE_FILE), &nets)?;
    let w = agent.weights();
    let manifest = format!(
        "step = {step}\nconfig_hash = {:016x}\nvariant = {}\nnetworks = {}\nmultiplier_params = {}\nlambda = {}\n",
        config_hash(&agent.config, &agent.constraints),
        agent.config.variant.name(),
        nets.len(),
        join(agent.multipliers.parameters().iter().copied()),
        join(std::iter::once(w.lambda0).chain(w.lambdas)),
    );
    std::fs::write(dir.join(MANIFEST_FILE), manifest)?;
    Ok(())
}

fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: i + 1, msg: "expected key = value".into() })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Restores an agent saved under the same configuration and constraints.
/// Optimizer moments are not stored and restart from zero.
pub fn load_checkpoint<T: Scalar>(
    dir: &Path,
    obs_dim: usize,
    act_dim: usize,
    constraints: ConstraintSet,
    config: TrainerConfig,
) -> Result<(Agent<T>, u64)> {
    let manifest = parse_manifest(&std::fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let field = |k: &str| manifest.get(k).ok_or_else(|| Error::Model(format!("manifest lacks {k}")));
    let mut agent = Agent::<T>::new(obs_dim, act_dim, constraints, config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let expected = format!("{:016x}", config_hash(&agent.config, &agent.constraints));
    if field("config_hash")? != &expected {
        return Err(Error::Model("checkpoint was written under a different configuration".into()));
    }
    let step: u64 = field("step")?.parse().map_err(|_| Error::Model("bad step in manifest".into()))?;
    let loaded = load_bundle::<T>(&dir.join(BUNDLE_FILE))?;
    let mut slots = networks_mut(&mut agent);
    if loaded.len() != slots.len() {
        return Err(Error::Model(format!("bundle has {} networks, agent needs {}", loaded.len(), slots.len())));
    }
    for (slot, net) in slots.iter_mut().zip(loaded) {
        if !slot.same_shape(&net) {
            return Err(Error::Model("network shape differs from configuration".into()));
        }
        **slot = net;
    }
    let params: Vec<T> = field("multiplier_params")?
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>().map(T::lit).map_err(|_| Error::Model(format!("bad multiplier value {s:?}"))))
        .collect::<Result<_>>()?;
    match &mut agent.multipliers {
        crate::multipliers::Multipliers::Normalized(m) if m.z.len() == params.len() => m.z = params,
        crate::multipliers::Multipliers::Unnormalized(m) if m.lambda.len() == params.len() => m.lambda = params,
        _ => return Err(Error::Model("multiplier count differs from configuration".into())),
    }
    Ok((agent, step))
}
