//! Twin Q-networks with target copies, one pair per objective.

use rand::Rng;

use super::adam::AdamState;
use super::mlp::{soft_update, Activation, Mlp, MlpCache};
use crate::error::Result;
use crate::scalar::Scalar;

/// `[obs + act, hidden.., 1]` with relu hidden layers.
pub fn critic_net<T: Scalar, R: Rng + ?Sized>(
    obs_dim: usize,
    act_dim: usize,
    hidden: &[usize],
    rng: &mut R,
) -> Result<Mlp<T>> {
    let mut sizes = vec![obs_dim + act_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    let mut acts = vec![Activation::Relu; hidden.len()];
    acts.push(Activation::Identity);
    Mlp::new(&sizes, &acts, false, rng)
}

/// Row-wise concatenation `[s | a]`.
pub fn concat_rows<T: Scalar>(states: &[T], obs_dim: usize, actions: &[T], act_dim: usize, batch: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(batch * (obs_dim + act_dim));
    for r in 0..batch {
        out.extend_from_slice(&states[r * obs_dim..(r + 1) * obs_dim]);
        out.extend_from_slice(&actions[r * act_dim..(r + 1) * act_dim]);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NetSet {
    Online,
    Target,
}

/// Elementwise minimum over the twins, with the caches needed to
/// differentiate through whichever twin was selected.
#[derive(Clone, Debug)]
pub struct MinQ<T> {
    pub values: Vec<T>,
    /// Index of the selected twin per row.
    pub choice: Vec<u8>,
    pub caches: [MlpCache<T>; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwinCritic<T> {
    pub online: [Mlp<T>; 2],
    pub target: [Mlp<T>; 2],
    pub optim: [AdamState<T>; 2],
}

impl<T: Scalar> TwinCritic<T> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], lr: T, rng: &mut R) -> Result<Self> {
        let a = critic_net(obs_dim, act_dim, hidden, rng)?;
        let b = critic_net(obs_dim, act_dim, hidden, rng)?;
        let optim = [AdamState::new(a.num_params(), lr), AdamState::new(b.num_params(), lr)];
        Ok(Self { target: [a.clone(), b.clone()], online: [a, b], optim })
    }

    pub fn nets(&self, set: NetSet) -> &[Mlp<T>; 2] {
        match set {
            NetSet::Online => &self.online,
            NetSet::Target => &self.target,
        }
    }

    pub fn min_q(&self, set: NetSet, sa: &[T], batch: usize) -> Result<MinQ<T>> {
        let nets = self.nets(set);
        let c0 = nets[0].forward(sa, batch)?;
        let c1 = nets[1].forward(sa, batch)?;
        let (q0, q1) = (c0.output(), c1.output());
        let mut values = Vec::with_capacity(batch);
        let mut choice = Vec::with_capacity(batch);
        for i in 0..batch {
            if q1[i] < q0[i] {
                values.push(q1[i]);
                choice.push(1);
            } else {
                values.push(q0[i]);
                choice.push(0);
            }
        }
        Ok(MinQ { values, choice, caches: [c0, c1] })
    }

    /// Gradient of `sum_i weight_i * minQ_i` with respect to the network input.
    pub fn min_q_input_grad(&self, set: NetSet, m: &MinQ<T>, weights: &[T]) -> Result<Vec<T>> {
        let nets = self.nets(set);
        let batch = m.values.len();
        let mut total: Option<Vec<T>> = None;
        for j in 0..2u8 {
            let upstream: Vec<T> = (0..batch)
                .map(|i| if m.choice[i] == j { weights[i] } else { T::zero() })
                .collect();
            if upstream.iter().all(|&u| u == T::zero()) {
                continue;
            }
            let dx = nets[j as usize].backward(&m.caches[j as usize], &upstream, None, true)?.unwrap();
            match total.as_mut() {
                None => total = Some(dx),
                Some(acc) => acc.iter_mut().zip(dx).for_each(|(a, b)| *a += b),
            }
        }
        Ok(total.unwrap_or_else(|| vec![T::zero(); batch * nets[0].input_dim()]))
    }

    pub fn soft_update_targets(&mut self, tau: T) {
        for j in 0..2 {
            soft_update(self.target[j].params_mut(), self.online[j].params(), tau);
        }
    }
}

/// One twin critic per objective: index 0 models the reward, the rest model
/// the constraint indicators in slot order.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticEnsemble<T> {
    pub members: Vec<TwinCritic<T>>,
}

impl<T: Scalar> CriticEnsemble<T> {
    pub fn new<R: Rng + ?Sized>(
        count: usize,
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        lr: T,
        rng: &mut R,
    ) -> Result<Self> {
        let members = (0..count)
            .map(|_| TwinCritic::new(obs_dim, act_dim, hidden, lr, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}
