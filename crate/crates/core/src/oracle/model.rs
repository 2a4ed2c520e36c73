use rand::Rng;

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Finite discounted CMDP with indicator costs.
///
/// Tables are flat and row-major: `p[(s * A + a) * S + s']`, `r[s * A + a]`,
/// `c[k][s * A + a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularCMDP {
    states: usize,
    actions: usize,
    p: Vec<f64>,
    r: Vec<f64>,
    c: Vec<Vec<f64>>,
    d: Vec<f64>,
    gamma: f64,
    p0: Vec<f64>,
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::Model(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::Model(format!("{what} sums to {total}")));
    }
    Ok(())
}

impl TabularCMDP {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        states: usize,
        actions: usize,
        p: Vec<f64>,
        r: Vec<f64>,
        c: Vec<Vec<f64>>,
        d: Vec<f64>,
        gamma: f64,
        p0: Vec<f64>,
    ) -> Result<Self> {
        if states == 0 || actions == 0 {
            return Err(Error::Model("need at least one state and one action".into()));
        }
        let sa = states * actions;
        if p.len() != sa * states || r.len() != sa || p0.len() != states {
            return Err(Error::Model("table sizes do not match S and A".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Model(format!("discount {gamma} outside [0, 1)")));
        }
        for (i, row) in p.chunks(states).enumerate() {
            check_distribution(row, &format!("P row (s={}, a={})", i / actions, i % actions))?;
        }
        check_distribution(&p0, "initial distribution")?;
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("reward table has a non-finite entry".into()));
        }
        if c.len() != d.len() {
            return Err(Error::Model(format!("{} cost tables but {} thresholds", c.len(), d.len())));
        }
        for (k, table) in c.iter().enumerate() {
            if table.len() != sa {
                return Err(Error::Model(format!("cost table {k} has wrong size")));
            }
            if table.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Model(format!("cost table {k} is not an indicator")));
            }
        }
        if d.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Model("thresholds must lie in [0, 1]".into()));
        }
        Ok(Self { states, actions, p, r, c, d, gamma, p0 })
    }

    pub fn states(&self) -> usize {
        self.states
    }
    pub fn actions(&self) -> usize {
        self.actions
    }
    pub fn num_constraints(&self) -> usize {
        self.c.len()
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn transitions(&self) -> &[f64] {
        &self.p
    }
    pub fn reward(&self) -> &[f64] {
        &self.r
    }
    pub fn cost(&self, k: usize) -> &[f64] {
        &self.c[k]
    }
    pub fn costs(&self) -> &[Vec<f64>] {
        &self.c
    }
    pub fn thresholds(&self) -> &[f64] {
        &self.d
    }
    pub fn initial(&self) -> &[f64] {
        &self.p0
    }

    /// `P(. | s, a)`.
    pub fn next_distribution(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.actions + a) * self.states;
        &self.p[start..start + self.states]
    }

    /// `R - sum_k lambda_k C_k`.
    pub fn lagrangian_reward(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        if lambda.len() != self.c.len() {
            return Err(Error::Shape(format!("{} multipliers for {} constraints", lambda.len(), self.c.len())));
        }
        let mut out = self.r.clone();
        for (table, &l) in self.c.iter().zip(lambda) {
            for (o, &c) in out.iter_mut().zip(table) {
                *o -= l * c;
            }
        }
        Ok(out)
    }

    fn check_table(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.states * self.actions {
            return Err(Error::Shape(format!("table of {} entries, expected {}", f.len(), self.states * self.actions)));
        }
        Ok(())
    }

    fn check_policy(&self, pi: &TabularPolicy) -> Result<()> {
        if pi.states != self.states || pi.actions != self.actions {
            return Err(Error::Shape("policy dimensions differ from the model".into()));
        }
        Ok(())
    }
}

/// Stationary randomized policy `pi(a | s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy {
    states: usize,
    actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(states: usize, actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != states * actions {
            return Err(Error::Shape("policy table size".into()));
        }
        for (s, row) in probs.chunks(actions).enumerate() {
            check_distribution(row, &format!("policy row {s}"))?;
        }
        Ok(Self { states, actions, probs })
    }

    pub fn uniform(states: usize, actions: usize) -> Self {
        Self { states, actions, probs: vec![1.0 / actions as f64; states * actions] }
    }

    pub fn deterministic(actions: usize, choice: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; choice.len() * actions];
        for (s, &a) in choice.iter().enumerate() {
            if a >= actions {
                return Err(Error::Shape(format!("action {a} out of range")));
            }
            probs[s * actions + a] = 1.0;
        }
        Ok(Self { states: choice.len(), actions, probs })
    }

    /// Softmax over per-state logits.
    pub fn softmax(states: usize, actions: usize, logits: &[f64]) -> Self {
        let mut probs = Vec::with_capacity(states * actions);
        for row in logits.chunks(actions) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
            let t: f64 = e.iter().sum();
            probs.extend(e.into_iter().map(|v| v / t));
        }
        Self { states, actions, probs }
    }

    /// The policy whose occupancy is `x`; states with no mass act uniformly.
    pub fn from_occupancy(states: usize, actions: usize, x: &[f64]) -> Result<Self> {
        if x.len() != states * actions {
            return Err(Error::Shape("occupancy table size".into()));
        }
        let mut probs = Vec::with_capacity(x.len());
        for row in x.chunks(actions) {
            let t: f64 = row.iter().sum();
            if t > 0.0 {
                probs.extend(row.iter().map(|&v| v.max(0.0) / t));
            } else {
                probs.extend(std::iter::repeat_n(1.0 / actions as f64, actions));
            }
        }
        Ok(Self { states, actions, probs })
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.actions..(s + 1) * self.actions]
    }

    pub fn table(&self) -> &[f64] {
        &self.probs
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }
}

/// Solves `a x = b` for a dense `n x n` system by Gaussian elimination with
/// partial pivoting.
pub fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    if a.len() != n * n {
        return Err(Error::Shape("matrix is not n x n".into()));
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        if a[pivot * n + col].abs() < 1e-300 {
            return Err(Error::Model("singular linear system".into()));
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                a[row * n + j] -= factor * a[col * n + j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|j| a[row * n + j] * x[j]).sum();
        x[row] = (b[row] - tail) / a[row * n + row];
    }
    Ok(x)
}

/// `Z(gamma) = 1 / (1 - gamma)`.
pub fn normalizer(gamma: f64) -> f64 {
    1.0 / (1.0 - gamma)
}

fn policy_matrix(m: &TabularCMDP, pi: &TabularPolicy) -> Vec<f64> {
    let n = m.states;
    let mut pp = vec![0.0; n * n];
    for s in 0..n {
        for a in 0..m.actions {
            let w = pi.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for (t, &p) in m.next_distribution(s, a).iter().enumerate() {
                pp[s * n + t] += w * p;
            }
        }
    }
    pp
}

/// Solves `v = f_pi + gamma P_pi v`.
pub fn state_values(m: &TabularCMDP, pi: &TabularPolicy, f: &[f64]) -> Result<Vec<f64>> {
    m.check_policy(pi)?;
    m.check_table(f)?;
    let n = m.states;
    let pp = policy_matrix(m, pi);
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = if i == j { 1.0 } else { 0.0 } - m.gamma * pp[i * n + j];
        }
    }
    let b = (0..n).map(|s| (0..m.actions).map(|act| pi.prob(s, act) * f[s * m.actions + act]).sum()).collect();
    solve_linear(a, b)
}

/// Expected discounted sum of `f` from the initial distribution.
pub fn exact_return(m: &TabularCMDP, pi: &TabularPolicy, f: &[f64]) -> Result<f64> {
    let v = state_values(m, pi, f)?;
    Ok(m.p0.iter().zip(&v).map(|(p, v)| p * v).sum())
}

/// Normalized discounted state distribution `(1 - gamma) sum_t gamma^t P(s_t = s)`.
pub fn discounted_state_distribution(m: &TabularCMDP, pi: &TabularPolicy) -> Result<Vec<f64>> {
    m.check_policy(pi)?;
    let n = m.states;
    let pp = policy_matrix(m, pi);
    // (I - gamma P_pi^T) d = (1 - gamma) p0
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = if i == j { 1.0 } else { 0.0 } - m.gamma * pp[j * n + i];
        }
    }
    let b = m.p0.iter().map(|p| (1.0 - m.gamma) * p).collect();
    solve_linear(a, b)
}

/// Normalized state-action occupancy `x(s, a)`; sums to one.
pub fn occupancy(m: &TabularCMDP, pi: &TabularPolicy) -> Result<Vec<f64>> {
    let d = discounted_state_distribution(m, pi)?;
    let mut x = Vec::with_capacity(m.states * m.actions);
    for (s, ds) in d.iter().enumerate() {
        x.extend(pi.row(s).iter().map(|p| ds * p));
    }
    Ok(x)
}

/// Reward and constraint values of a policy in occupancy units.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnProfile {
    pub reward: f64,
    pub costs: Vec<f64>,
}

impl ReturnProfile {
    pub fn from_occupancy(m: &TabularCMDP, x: &[f64]) -> Self {
        let dot = |f: &[f64]| x.iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
        Self { reward: dot(&m.r), costs: m.c.iter().map(|c| dot(c)).collect() }
    }

    pub fn feasible(&self, m: &TabularCMDP, slack: f64) -> bool {
        self.costs.iter().zip(&m.d).all(|(c, d)| *c <= d + slack)
    }
}

pub fn profile(m: &TabularCMDP, pi: &TabularPolicy) -> Result<ReturnProfile> {
    Ok(ReturnProfile::from_occupancy(m, &occupancy(m, pi)?))
}

/// Optimal values for reward table `f` and a greedy deterministic policy
/// (lowest action index on ties). Iterates until the sup-norm change falls
/// below `tol`.
pub fn value_iteration(m: &TabularCMDP, f: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<usize>)> {
    m.check_table(f)?;
    let (n, na) = (m.states, m.actions);
    let q_of = |v: &[f64], s: usize, a: usize| {
        f[s * na + a] + m.gamma * m.next_distribution(s, a).iter().zip(v).map(|(p, v)| p * v).sum::<f64>()
    };
    let mut v = vec![0.0; n];
    loop {
        let next: Vec<f64> =
            (0..n).map(|s| (0..na).map(|a| q_of(&v, s, a)).fold(f64::NEG_INFINITY, f64::max)).collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < tol {
            break;
        }
    }
    let greedy = (0..n)
        .map(|s| {
            let mut best = 0;
            for a in 1..na {
                if q_of(&v, s, a) > q_of(&v, s, best) + 1e-12 {
                    best = a;
                }
            }
            best
        })
        .collect();
    Ok((v, greedy))
}

/// Random instance with dense transitions, uniform rewards on `[0, 1)`,
/// coin-flip indicator costs, every threshold equal to `d` and all initial
/// mass on state 0.
pub fn random_cmdp<R: Rng + ?Sized>(rng: &mut R, states: usize, actions: usize, k: usize, gamma: f64, d: f64) -> TabularCMDP {
    let mut p = Vec::with_capacity(states * actions * states);
    for _ in 0..states * actions {
        let row: Vec<f64> = (0..states).map(|_| rng.random::<f64>() + 0.05).collect();
        let t: f64 = row.iter().sum();
        p.extend(row.into_iter().map(|v| v / t));
    }
    let r = (0..states * actions).map(|_| rng.random::<f64>()).collect();
    let c = (0..k)
        .map(|_| (0..states * actions).map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut p0 = vec![0.0; states];
    p0[0] = 1.0;
    TabularCMDP::new(states, actions, p, r, c, vec![d; k], gamma, p0).expect("generated instance is valid")
}

/// Stochastic policy with every probability bounded away from zero.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, states: usize, actions: usize) -> TabularPolicy {
    let mut probs = Vec::with_capacity(states * actions);
    for _ in 0..states {
        let row: Vec<f64> = (0..actions).map(|_| rng.random::<f64>() + 0.01).collect();
        let t: f64 = row.iter().sum();
        probs.extend(row.into_iter().map(|v| v / t));
    }
    TabularPolicy::new(states, actions, probs).expect("rows sum to one")
}
