//! Lagrange multipliers over indicator constraints.
//!
//! Multipliers are normalized with a softmax over `(a0, z_1, .., z_n)` where
//! `a0` is a frozen dummy logit whose weight `lambda_0` scales the reward
//! objective. All weights therefore stay on the probability simplex no
//! matter how long a constraint stays violated. The classic projected
//! (unnormalized) update is kept for comparison.

use crate::error::{Error, Result};
use crate::events::{Bound, ConstraintSpec, EventVector};
use crate::neural::AdamState;
use crate::scalar::Scalar;

/// Fraction of the batch in which flag `k` fired.
pub fn cost_rate(batch: &[EventVector], k: usize) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if let Some(e) = batch.iter().find(|e| k >= e.len()) {
        return Err(Error::Shape(format!("slot {k} out of range for {} flags", e.len())));
    }
    let hits = batch.iter().filter(|e| e.get(k)).count();
    Ok(hits as f64 / batch.len() as f64)
}

/// Fraction of episodes closed inside the batch on which flag `k` fired.
///
/// Meant for events that can only fire on an episode's last transition,
/// such as reaching the goal: their per-step rate is bounded by one over the
/// episode length, while thresholds for them are stated per episode. A
/// batch in which no episode ends reports 0.
pub fn episode_rate(batch: &[EventVector], ends: &[bool], k: usize) -> Result<f64> {
    if batch.len() != ends.len() {
        return Err(Error::Shape(format!("{} event vectors, {} episode flags", batch.len(), ends.len())));
    }
    cost_rate(batch, k)?;
    let episodes = ends.iter().filter(|&&e| e).count();
    if episodes == 0 {
        return Ok(0.0);
    }
    let hits = batch.iter().zip(ends).filter(|(e, &end)| end && e.get(k)).count();
    Ok(hits as f64 / episodes as f64)
}

/// Per-slot behavior rates estimated from one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct RateEstimate {
    pub rates: Vec<f64>,
    pub batch_size: usize,
}

impl RateEstimate {
    pub fn from_batch(batch: &[EventVector]) -> Result<Self> {
        let slots = batch.first().ok_or(Error::EmptyBatch)?.len();
        let rates = (0..slots).map(|k| cost_rate(batch, k)).collect::<Result<Vec<_>>>()?;
        Ok(Self { rates, batch_size: batch.len() })
    }

    /// Per-step rates for every slot except `episodic`, which is measured
    /// per completed episode with [`episode_rate`].
    pub fn with_episodic_slot(batch: &[EventVector], ends: &[bool], episodic: usize) -> Result<Self> {
        let mut est = Self::from_batch(batch)?;
        est.rates[episodic] = episode_rate(batch, ends, episodic)?;
        Ok(est)
    }
}

/// `max(lambda_0, lambda_success)`.
pub fn bootstrap_weight<T: Scalar>(lambda0: T, lambda_success: T) -> T {
    lambda0.max(lambda_success)
}

/// Signed violation used by the multiplier loss: positive when satisfied.
fn slack(spec: &ConstraintSpec, rate: f64) -> f64 {
    match spec.bound {
        Bound::Upper => spec.threshold - rate,
        Bound::Lower => rate - spec.threshold,
    }
}

fn check_aligned(slots: usize, rates: &RateEstimate, specs: &[ConstraintSpec]) -> Result<()> {
    if rates.rates.len() != slots || specs.len() != slots {
        return Err(Error::Shape(format!(
            "{} multiplier slots, {} rates, {} specs",
            slots,
            rates.rates.len(),
            specs.len()
        )));
    }
    Ok(())
}

/// Weights of the Lagrangian at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangeWeights<T> {
    /// Weight of the reward objective.
    pub lambda0: T,
    /// One weight per constraint slot, success last when present.
    pub lambdas: Vec<T>,
}

/// Softmax-normalized multipliers.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiplierState<T> {
    pub z: Vec<T>,
    /// Dummy logit, never updated.
    pub a0: T,
    pub adam: AdamState<T>,
}

impl<T: Scalar> MultiplierState<T> {
    pub fn new(slots: usize, initial_z: T, lr: T) -> Self {
        Self { z: vec![initial_z; slots], a0: T::zero(), adam: AdamState::new(slots, lr) }
    }

    pub fn slots(&self) -> usize {
        self.z.len()
    }

    /// `(lambda_0, lambda_1..)`, summing to one.
    pub fn normalized_multipliers(&self) -> LagrangeWeights<T> {
        softmax_weights(self.a0, &self.z)
    }

    /// Loss `sum_k c_k lambda_k(z)` and its full gradient in `z`, with the
    /// slacks `c_k` held constant.
    pub fn loss_and_grad(&self, slacks: &[T]) -> (T, Vec<T>) {
        multiplier_loss_grad(self.a0, &self.z, slacks)
    }

    /// One Adam descent step on `z` from the latest rate estimate.
    pub fn update(&mut self, rates: &RateEstimate, specs: &[ConstraintSpec]) -> Result<()> {
        check_aligned(self.slots(), rates, specs)?;
        let slacks: Vec<T> = specs.iter().zip(&rates.rates).map(|(s, &r)| T::lit(slack(s, r))).collect();
        let (_, grad) = self.loss_and_grad(&slacks);
        self.adam.step(&mut self.z, &grad)
    }
}

/// Softmax over `(a0, z)`, shifted by the max logit.
pub fn softmax_weights<T: Scalar>(a0: T, z: &[T]) -> LagrangeWeights<T> {
    let m = z.iter().fold(a0, |acc, &v| acc.max(v));
    let e0 = (a0 - m).exp();
    let ez: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    let total = e0 + ez.iter().copied().sum::<T>();
    LagrangeWeights { lambda0: e0 / total, lambdas: ez.into_iter().map(|e| e / total).collect() }
}

/// `L(z) = sum_k c_k lambda_k(z)` and `dL/dz_j = lambda_j (c_j - sum_k c_k lambda_k)`.
pub fn multiplier_loss_grad<T: Scalar>(a0: T, z: &[T], slacks: &[T]) -> (T, Vec<T>) {
    let w = softmax_weights(a0, z);
    let mean: T = w.lambdas.iter().zip(slacks).map(|(&l, &c)| l * c).sum();
    let grad = w.lambdas.iter().zip(slacks).map(|(&l, &c)| l * (c - mean)).collect();
    (mean, grad)
}

/// Projected multipliers `lambda <- max(0, lambda - lr * slack)`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnnormalizedMultipliers<T> {
    pub lambda: Vec<T>,
    pub lr: T,
}

impl<T: Scalar> UnnormalizedMultipliers<T> {
    pub fn new(slots: usize, initial: T, lr: T) -> Self {
        Self { lambda: vec![initial; slots], lr }
    }

    pub fn update(&mut self, rates: &RateEstimate, specs: &[ConstraintSpec]) -> Result<()> {
        check_aligned(self.lambda.len(), rates, specs)?;
        for ((l, s), &r) in self.lambda.iter_mut().zip(specs).zip(&rates.rates) {
            *l = (*l - self.lr * T::lit(slack(s, r))).max(T::zero());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MultiplierMode {
    Normalized,
    Unnormalized,
}

/// Either multiplier parameterization behind one interface.
#[derive(Clone, Debug, PartialEq)]
pub enum Multipliers<T> {
    Normalized(MultiplierState<T>),
    Unnormalized(UnnormalizedMultipliers<T>),
}

impl<T: Scalar> Multipliers<T> {
    pub fn new(mode: MultiplierMode, slots: usize, initial: T, lr: T) -> Self {
        match mode {
            MultiplierMode::Normalized => Multipliers::Normalized(MultiplierState::new(slots, initial, lr)),
            MultiplierMode::Unnormalized => Multipliers::Unnormalized(UnnormalizedMultipliers::new(slots, initial, lr)),
        }
    }

    pub fn slots(&self) -> usize {
        match self {
            Multipliers::Normalized(m) => m.slots(),
            Multipliers::Unnormalized(m) => m.lambda.len(),
        }
    }

    /// Current weights. In unnormalized mode the reward weight is fixed to one.
    pub fn weights(&self) -> LagrangeWeights<T> {
        match self {
            Multipliers::Normalized(m) => m.normalized_multipliers(),
            Multipliers::Unnormalized(m) => LagrangeWeights { lambda0: T::one(), lambdas: m.lambda.clone() },
        }
    }

    pub fn update(&mut self, rates: &RateEstimate, specs: &[ConstraintSpec]) -> Result<()> {
        match self {
            Multipliers::Normalized(m) => m.update(rates, specs),
            Multipliers::Unnormalized(m) => m.update(rates, specs),
        }
    }

    /// Raw parameters: logits `z` or the multipliers themselves.
    pub fn parameters(&self) -> &[T] {
        match self {
            Multipliers::Normalized(m) => &m.z,
            Multipliers::Unnormalized(m) => &m.lambda,
        }
    }
}

/// Coefficients of each critic in the policy objective, in critic order:
/// reward, the `K` behavioral constraints (negative), then success (positive).
///
/// With `bootstrap` the reward weight is `max(lambda_0, lambda_success)`.
pub fn objective_weights<T: Scalar>(w: &LagrangeWeights<T>, has_success: bool, bootstrap: bool) -> Vec<T> {
    let n = w.lambdas.len();
    let k = if has_success { n - 1 } else { n };
    let reward = if has_success && bootstrap { bootstrap_weight(w.lambda0, w.lambdas[n - 1]) } else { w.lambda0 };
    let mut out = Vec::with_capacity(n + 1);
    out.push(reward);
    out.extend(w.lambdas[..k].iter().map(|&l| -l));
    if has_success {
        out.push(w.lambdas[n - 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Indicator;
    use proptest::prelude::*;

    fn flags(bits: &[u8]) -> Vec<EventVector> {
        bits.iter().map(|&b| EventVector::new(vec![b == 1])).collect()
    }

    fn upper(t: f64) -> ConstraintSpec {
        ConstraintSpec::upper("c", t, Indicator::direct(0))
    }

    fn lower(t: f64) -> ConstraintSpec {
        ConstraintSpec::lower("s", t, Indicator::direct(0))
    }

    #[test]
    fn episode_rate_counts_closed_episodes() {
        // two episodes end in the window, one of them at the goal
        let ends = [false, true, false, false, true, false];
        let hits = flags(&[0, 1, 0, 0, 0, 0]);
        assert_eq!(episode_rate(&hits, &ends, 0).unwrap(), 0.5);
        assert_eq!(cost_rate(&hits, 0).unwrap(), 1.0 / 6.0);
        assert_eq!(episode_rate(&hits, &[false; 6], 0).unwrap(), 0.0);
        assert!(episode_rate(&hits, &ends[..5], 0).is_err());
        let est = RateEstimate::with_episodic_slot(&hits, &ends, 0).unwrap();
        assert_eq!(est.rates, vec![0.5]);
    }

    #[test]
    fn rate_counts_flags() {
        assert_eq!(cost_rate(&flags(&[1, 0, 0, 1]), 0).unwrap(), 0.5);
        assert_eq!(cost_rate(&flags(&[0, 0, 0]), 0).unwrap(), 0.0);
        assert!(matches!(cost_rate(&[], 0), Err(Error::EmptyBatch)));
    }

    #[test]
    fn twenty_one_lava_steps_violate_one_percent() {
        let mut bits = vec![0u8; 2000];
        bits[..21].fill(1);
        let r = cost_rate(&flags(&bits), 0).unwrap();
        assert_eq!(r, 0.0105);
        assert!(!upper(0.01).satisfied_by(r));
    }

    #[test]
    fn symmetric_logits_give_equal_weights() {
        let m = MultiplierState::<f64>::new(2, 0.0, 0.03);
        let w = m.normalized_multipliers();
        for v in [w.lambda0, w.lambdas[0], w.lambdas[1]] {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn very_negative_logits_put_all_weight_on_reward() {
        let mut m = MultiplierState::<f64>::new(3, 0.0, 0.03);
        m.z = vec![-800.0; 3];
        let w = m.normalized_multipliers();
        assert_eq!(w.lambda0, 1.0);
        assert!(w.lambdas.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn initial_logits_match_direct_formula() {
        // exp(0.02) / (exp(0) + 2 exp(0.02)), evaluated independently
        let e = 0.02f64.exp();
        let lam = e / (1.0 + 2.0 * e);
        let m = MultiplierState::<f64>::new(2, 0.02, 0.03);
        let w = m.normalized_multipliers();
        assert!((w.lambdas[0] - lam).abs() < 1e-15);
        assert!((w.lambda0 - 1.0 / (1.0 + 2.0 * e)).abs() < 1e-15);
        assert!((lam - 0.335_548_099_177_705).abs() < 1e-12);
    }

    #[test]
    fn bootstrap_takes_the_max() {
        assert_eq!(bootstrap_weight(0.1, 0.6), 0.6);
        assert_eq!(bootstrap_weight(0.5, 0.2), 0.5);
        assert_eq!(bootstrap_weight(0.3, 0.3), 0.3);
    }

    #[test]
    fn violated_cost_raises_its_multiplier() {
        let mut m = MultiplierState::<f64>::new(1, 0.02, 0.03);
        let before = m.normalized_multipliers().lambdas[0];
        m.update(&RateEstimate { rates: vec![0.2], batch_size: 2000 }, &[upper(0.01)]).unwrap();
        assert!(m.normalized_multipliers().lambdas[0] > before);
    }

    #[test]
    fn unmet_success_raises_its_multiplier() {
        let mut m = MultiplierState::<f64>::new(1, 0.02, 0.03);
        let before = m.normalized_multipliers().lambdas[0];
        m.update(&RateEstimate { rates: vec![0.5], batch_size: 2000 }, &[lower(0.99)]).unwrap();
        assert!(m.normalized_multipliers().lambdas[0] > before);
    }

    #[test]
    fn misaligned_update_rejected() {
        let mut m = MultiplierState::<f64>::new(2, 0.0, 0.03);
        let r = RateEstimate { rates: vec![0.1], batch_size: 10 };
        assert!(m.update(&r, &[upper(0.1)]).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_difference() {
        let z = [0.3f64, -1.2, 0.8];
        let c = [0.05f64, -0.2, 0.4];
        let (_, g) = multiplier_loss_grad(0.0, &z, &c);
        for j in 0..3 {
            let h = 1e-6;
            let mut zp = z;
            zp[j] += h;
            let up = multiplier_loss_grad(0.0, &zp, &c).0;
            zp[j] -= 2.0 * h;
            let down = multiplier_loss_grad(0.0, &zp, &c).0;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-8);
        }
    }

    #[test]
    fn unnormalized_grows_under_constant_violation_and_clips_at_zero() {
        let mut m = UnnormalizedMultipliers::<f64>::new(1, 0.02, 0.03);
        let violated = RateEstimate { rates: vec![1.0], batch_size: 100 };
        let mut prev = m.lambda[0];
        for _ in 0..100 {
            m.update(&violated, &[upper(0.0)]).unwrap();
            assert!(m.lambda[0] > prev);
            prev = m.lambda[0];
        }
        assert!((m.lambda[0] - (0.02 + 100.0 * 0.03)).abs() < 1e-9);
        let slack = RateEstimate { rates: vec![0.0], batch_size: 100 };
        for _ in 0..1000 {
            m.update(&slack, &[upper(0.5)]).unwrap();
        }
        assert_eq!(m.lambda[0], 0.0);
    }

    #[test]
    fn objective_weights_layout() {
        let w = LagrangeWeights { lambda0: 0.1, lambdas: vec![0.2, 0.1, 0.6] };
        assert_eq!(objective_weights(&w, true, true), vec![0.6, -0.2, -0.1, 0.6]);
        assert_eq!(objective_weights(&w, true, false), vec![0.1, -0.2, -0.1, 0.6]);
        assert_eq!(objective_weights(&w, false, true), vec![0.1, -0.2, -0.1, -0.6]);
        let none = LagrangeWeights { lambda0: 1.0, lambdas: vec![] };
        assert_eq!(objective_weights(&none, false, true), vec![1.0]);
    }

    proptest! {
        #[test]
        fn weights_stay_on_simplex_through_updates(
            z0 in proptest::collection::vec(-5.0f64..5.0, 1..6),
            rates in proptest::collection::vec(0.0f64..1.0, 6),
            steps in 1usize..50,
        ) {
            let n = z0.len();
            let mut m = MultiplierState::<f64>::new(n, 0.0, 0.3);
            m.z = z0;
            let specs: Vec<_> = (0..n).map(|i| if i == n - 1 { lower(0.9) } else { upper(0.05) }).collect();
            let est = RateEstimate { rates: rates[..n].to_vec(), batch_size: 100 };
            for _ in 0..steps {
                m.update(&est, &specs).unwrap();
                let w = m.normalized_multipliers();
                let total = w.lambda0 + w.lambdas.iter().sum::<f64>();
                prop_assert!((total - 1.0).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&w.lambda0));
                prop_assert!(w.lambdas.iter().all(|l| (0.0..=1.0).contains(l)));
            }
        }

        #[test]
        fn binding_constraint_rises_slack_constraint_falls(
            z0 in proptest::collection::vec(-3.0f64..3.0, 2),
            over in 0.01f64..0.9,
            under in 0.01f64..0.09,
        ) {
            let mut m = MultiplierState::<f64>::new(2, 0.0, 0.03);
            m.z = z0;
            let before = m.normalized_multipliers();
            let specs = [upper(0.05), upper(0.1)];
            let est = RateEstimate { rates: vec![0.05 + over, 0.1 - under], batch_size: 2000 };
            m.update(&est, &specs).unwrap();
            let after = m.normalized_multipliers();
            prop_assert!(after.lambdas[0] > before.lambdas[0]);
            prop_assert!(after.lambdas[1] < before.lambdas[1]);
        }

        #[test]
        fn uniform_slack_shifts_mass_to_reward(
            z0 in proptest::collection::vec(-3.0f64..3.0, 1..6),
            slack in 0.001f64..0.5,
        ) {
            let n = z0.len();
            let mut m = MultiplierState::<f64>::new(n, 0.0, 0.03);
            m.z = z0;
            let before = m.normalized_multipliers();
            let specs: Vec<_> = (0..n).map(|_| upper(0.6)).collect();
            let est = RateEstimate { rates: vec![0.6 - slack; n], batch_size: 2000 };
            m.update(&est, &specs).unwrap();
            let after = m.normalized_multipliers();
            prop_assert!(after.lambda0 >= before.lambda0);
            for (a, b) in after.lambdas.iter().zip(&before.lambdas) {
                prop_assert!(a <= b);
            }
        }

        #[test]
        fn small_descent_step_never_raises_loss(
            z0 in proptest::collection::vec(-3.0f64..3.0, 1..6),
            c in proptest::collection::vec(-0.5f64..0.5, 6),
        ) {
            let n = z0.len();
            let (l0, g) = multiplier_loss_grad(0.0, &z0, &c[..n]);
            let z1: Vec<f64> = z0.iter().zip(&g).map(|(z, g)| z - 1e-4 * g).collect();
            let (l1, _) = multiplier_loss_grad(0.0, &z1, &c[..n]);
            prop_assert!(l1 <= l0 + 1e-15);
        }

        #[test]
        fn cost_rate_is_exact_count_ratio(bits in proptest::collection::vec(0u8..2, 1..64)) {
            let hits = bits.iter().filter(|&&b| b == 1).count();
            let r = cost_rate(&flags(&bits), 0).unwrap();
            prop_assert_eq!(r, hits as f64 / bits.len() as f64);
            prop_assert_eq!((r * bits.len() as f64).round() as usize, hits);
        }
    }
}
