use super::model::{discounted_state_distribution, state_values, ReturnProfile, TabularCMDP, TabularPolicy};
use crate::error::{Error, Result};
use crate::multipliers::{multiplier_loss_grad, softmax_weights, LagrangeWeights, MultiplierMode};

/// Exact gradient of `<x_pi, f>` with respect to softmax policy logits.
///
/// Returns the objective value (occupancy units) and
/// `d(s) pi(a|s) A(s, a)` for every logit.
pub fn policy_gradient(m: &TabularCMDP, logits: &[f64], f: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (ns, na) = (m.states(), m.actions());
    if logits.len() != ns * na {
        return Err(Error::Shape("logit table size".into()));
    }
    let pi = TabularPolicy::softmax(ns, na, logits);
    let v = state_values(m, &pi, f)?;
    let d = discounted_state_distribution(m, &pi)?;
    let mut grad = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let q = f[s * na + a] + m.gamma() * m.next_distribution(s, a).iter().zip(&v).map(|(p, v)| p * v).sum::<f64>();
            grad[s * na + a] = d[s] * pi.prob(s, a) * (q - v[s]);
        }
    }
    let value = (1.0 - m.gamma()) * m.initial().iter().zip(&v).map(|(p, v)| p * v).sum::<f64>();
    Ok((value, grad))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdaConfig {
    pub steps: usize,
    pub policy_lr: f64,
    pub multiplier_lr: f64,
    pub mode: MultiplierMode,
    /// Starting `lambda` (unnormalized) or logit `z` (normalized).
    pub initial_multiplier: f64,
    /// Multipliers above this magnitude are reported as divergence.
    pub divergence_bound: f64,
}

impl Default for GdaConfig {
    fn default() -> Self {
        Self {
            steps: 5000,
            policy_lr: 1.0,
            multiplier_lr: 0.05,
            mode: MultiplierMode::Unnormalized,
            initial_multiplier: 0.0,
            divergence_bound: 1e6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdaStep {
    pub weights: LagrangeWeights<f64>,
    pub profile: ReturnProfile,
    pub occupancy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GdaTrajectory {
    pub steps: Vec<GdaStep>,
    pub final_logits: Vec<f64>,
    /// First iteration at which a multiplier exceeded the divergence bound.
    pub diverged_at: Option<usize>,
}

impl GdaTrajectory {
    pub fn final_policy(&self, m: &TabularCMDP) -> TabularPolicy {
        TabularPolicy::softmax(m.states(), m.actions(), &self.final_logits)
    }

    /// Policy whose occupancy is the mean occupancy of iterations `from..`.
    pub fn averaged(&self, m: &TabularCMDP, from: usize) -> Result<(TabularPolicy, ReturnProfile)> {
        let tail = self.steps.get(from..).filter(|t| !t.is_empty()).ok_or(Error::EmptyBatch)?;
        let mut x = vec![0.0; m.states() * m.actions()];
        for step in tail {
            for (acc, v) in x.iter_mut().zip(&step.occupancy) {
                *acc += v / tail.len() as f64;
            }
        }
        let policy = TabularPolicy::from_occupancy(m.states(), m.actions(), &x)?;
        Ok((policy, ReturnProfile::from_occupancy(m, &x)))
    }

    pub fn max_multiplier(&self) -> f64 {
        self.steps.iter().flat_map(|s| s.weights.lambdas.iter().copied()).fold(0.0, f64::max)
    }
}

/// Simultaneous gradient ascent on softmax policy logits and descent on the
/// multipliers of the tabular Lagrangian, with exact gradients.
pub fn gda_reference(m: &TabularCMDP, cfg: &GdaConfig) -> Result<GdaTrajectory> {
    let k = m.num_constraints();
    let (ns, na) = (m.states(), m.actions());
    let mut logits = vec![0.0; ns * na];
    let mut params = vec![cfg.initial_multiplier; k];
    let mut steps = Vec::with_capacity(cfg.steps);
    let mut diverged_at = None;
    for it in 0..cfg.steps {
        let weights = match cfg.mode {
            MultiplierMode::Unnormalized => LagrangeWeights { lambda0: 1.0, lambdas: params.clone() },
            MultiplierMode::Normalized => softmax_weights(0.0, &params),
        };
        let mut f: Vec<f64> = m.reward().iter().map(|r| weights.lambda0 * r).collect();
        for (table, &l) in m.costs().iter().zip(&weights.lambdas) {
            for (o, &c) in f.iter_mut().zip(table) {
                *o -= l * c;
            }
        }
        let (_, grad) = policy_gradient(m, &logits, &f)?;
        let pi = TabularPolicy::softmax(ns, na, &logits);
        let d = discounted_state_distribution(m, &pi)?;
        let occupancy: Vec<f64> = (0..ns * na).map(|i| d[i / na] * pi.table()[i]).collect();
        let profile = ReturnProfile::from_occupancy(m, &occupancy);
        if !profile.reward.is_finite() || weights.lambdas.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite(format!("tabular iteration {it}")));
        }
        if diverged_at.is_none() && weights.lambdas.iter().any(|l| l.abs() > cfg.divergence_bound) {
            diverged_at = Some(it);
        }

        let slack: Vec<f64> = m.thresholds().iter().zip(&profile.costs).map(|(d, c)| d - c).collect();
        match cfg.mode {
            MultiplierMode::Unnormalized => {
                for (l, s) in params.iter_mut().zip(&slack) {
                    *l = (*l - cfg.multiplier_lr * s).max(0.0);
                }
            }
            MultiplierMode::Normalized => {
                let (_, g) = multiplier_loss_grad(0.0, &params, &slack);
                for (z, g) in params.iter_mut().zip(g) {
                    *z -= cfg.multiplier_lr * g;
                }
            }
        }
        for (t, g) in logits.iter_mut().zip(grad) {
            *t += cfg.policy_lr * g;
        }
        steps.push(GdaStep { weights, profile, occupancy });
    }
    Ok(GdaTrajectory { steps, final_logits: logits, diverged_at })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two states, two actions. Action 1 earns more reward but always
    /// triggers the cost.
    fn tradeoff(d: f64) -> TabularCMDP {
        let p = vec![0.9, 0.1, 0.5, 0.5, 0.2, 0.8, 0.6, 0.4];
        let r = vec![0.2, 1.0, 0.1, 0.8];
        let c = vec![vec![0.0, 1.0, 0.0, 1.0]];
        TabularCMDP::new(2, 2, p, r, c, vec![d], 0.9, vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let m = tradeoff(0.3);
        let logits = vec![0.3, -0.2, 0.7, 0.1];
        let (_, g) = policy_gradient(&m, &logits, m.reward()).unwrap();
        for i in 0..4 {
            let h = 1e-6;
            let mut up = logits.clone();
            up[i] += h;
            let mut down = logits.clone();
            down[i] -= h;
            let fd = (policy_gradient(&m, &up, m.reward()).unwrap().0 - policy_gradient(&m, &down, m.reward()).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn slack_constraint_multiplier_decays() {
        let m = tradeoff(1.0);
        let cfg = GdaConfig { steps: 400, initial_multiplier: 2.0, ..GdaConfig::default() };
        let t = gda_reference(&m, &cfg).unwrap();
        assert_eq!(t.steps.last().unwrap().weights.lambdas[0], 0.0);
    }

    #[test]
    fn impossible_constraint_unnormalized_grows_without_bound() {
        let p = vec![1.0; 2];
        let m = TabularCMDP::new(1, 2, p, vec![1.0, 0.5], vec![vec![1.0, 1.0]], vec![0.0], 0.9, vec![1.0]).unwrap();
        let cfg = GdaConfig { steps: 3000, divergence_bound: 100.0, ..GdaConfig::default() };
        let t = gda_reference(&m, &cfg).unwrap();
        let lams: Vec<f64> = t.steps.iter().map(|s| s.weights.lambdas[0]).collect();
        assert!(lams.windows(2).all(|w| w[1] > w[0]));
        assert!(t.diverged_at.is_some());
        assert!((lams[2999] - 2999.0 * 0.05).abs() < 1e-9);
    }

    #[test]
    fn impossible_constraint_normalized_stays_bounded() {
        let p = vec![1.0; 2];
        let m = TabularCMDP::new(1, 2, p, vec![1.0, 0.5], vec![vec![1.0, 1.0]], vec![0.0], 0.9, vec![1.0]).unwrap();
        let cfg = GdaConfig { steps: 3000, mode: MultiplierMode::Normalized, divergence_bound: 1.0, ..GdaConfig::default() };
        let t = gda_reference(&m, &cfg).unwrap();
        assert!(t.max_multiplier() <= 1.0);
        assert!(t.diverged_at.is_none());
        for s in &t.steps {
            assert!((s.weights.lambda0 + s.weights.lambdas[0] - 1.0).abs() < 1e-12);
        }
    }
}
