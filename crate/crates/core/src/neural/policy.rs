//! Policy networks: the tanh-squashed Gaussian used by SAC and the
//! deterministic head used by TD3.

use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{Activation, Mlp, MlpCache};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// `log(1 - tanh(u)^2)` without cancellation for large `|u|`.
pub fn log_one_minus_tanh_sq<T: Scalar>(u: T) -> T {
    T::lit(2.0) * (T::lit(std::f64::consts::LN_2) - u - softplus(T::lit(-2.0) * u))
}

/// Draws `n` standard normal values.
pub fn standard_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<T> {
    (0..n).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect()
}

/// Diagonal Gaussian policy whose samples are squashed by `tanh`.
///
/// The final layer of `net` packs the mean head (first `act_dim` rows) and the
/// log-std head (last `act_dim` rows). The raw log-std output is mapped
/// smoothly into `[log_std_min, log_std_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy<T> {
    pub net: Mlp<T>,
    act_dim: usize,
    pub log_std_min: T,
    pub log_std_max: T,
}

/// A batch of reparameterized draws together with what the reverse pass needs.
#[derive(Clone, Debug)]
pub struct PolicySample<T> {
    pub batch: usize,
    pub cache: MlpCache<T>,
    pub mean: Vec<T>,
    pub log_std: Vec<T>,
    /// tanh of the raw log-std output, for the clamp derivative.
    raw_tanh: Vec<T>,
    pub noise: Vec<T>,
    pub actions: Vec<T>,
    pub log_probs: Vec<T>,
}

impl<T: Scalar> GaussianPolicy<T> {
    /// Two-hidden-layer policy: layer-normalized tanh, tanh, then the heads.
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * act_dim);
        let mut acts = vec![Activation::Tanh; hidden.len()];
        acts.push(Activation::Identity);
        let net = Mlp::new(&sizes, &acts, !hidden.is_empty(), rng)?;
        Self::from_net(net, act_dim)
    }

    pub fn from_net(net: Mlp<T>, act_dim: usize) -> Result<Self> {
        if net.output_dim() != 2 * act_dim {
            return Err(Error::Shape(format!(
                "policy net outputs {} values, heads need {}",
                net.output_dim(),
                2 * act_dim
            )));
        }
        Ok(Self { net, act_dim, log_std_min: T::lit(LOG_STD_MIN), log_std_max: T::lit(LOG_STD_MAX) })
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    fn squash_log_std(&self, raw: T) -> (T, T) {
        let t = raw.tanh();
        let half_span = T::lit(0.5) * (self.log_std_max - self.log_std_min);
        (self.log_std_min + half_span * (t + T::one()), t)
    }

    /// Means and clamped log-stds for a batch of observations.
    pub fn heads(&self, obs: &[T], batch: usize) -> Result<(MlpCache<T>, Vec<T>, Vec<T>, Vec<T>)> {
        let cache = self.net.forward(obs, batch)?;
        let a = self.act_dim;
        let out = cache.output();
        let mut mean = Vec::with_capacity(batch * a);
        let mut log_std = Vec::with_capacity(batch * a);
        let mut raw_tanh = Vec::with_capacity(batch * a);
        for r in 0..batch {
            mean.extend_from_slice(&out[r * 2 * a..r * 2 * a + a]);
            for &raw in &out[r * 2 * a + a..(r + 1) * 2 * a] {
                let (ls, t) = self.squash_log_std(raw);
                log_std.push(ls);
                raw_tanh.push(t);
            }
        }
        Ok((cache, mean, log_std, raw_tanh))
    }

    /// Reparameterized sample `tanh(mean + std * noise)` with its log-density,
    /// including the tanh change-of-variables term.
    pub fn sample_with_noise(&self, obs: &[T], batch: usize, noise: &[T]) -> Result<PolicySample<T>> {
        let a = self.act_dim;
        if noise.len() != batch * a {
            return Err(Error::Shape(format!("noise has {} values, expected {}", noise.len(), batch * a)));
        }
        let (cache, mean, log_std, raw_tanh) = self.heads(obs, batch)?;
        let mut actions = Vec::with_capacity(batch * a);
        let mut log_probs = Vec::with_capacity(batch);
        let half = T::lit(0.5);
        let c = T::lit(HALF_LN_2PI);
        for r in 0..batch {
            let mut lp = T::zero();
            for d in 0..a {
                let i = r * a + d;
                let eps = noise[i];
                let u = mean[i] + log_std[i].exp() * eps;
                actions.push(u.tanh());
                lp += -half * eps * eps - log_std[i] - c - log_one_minus_tanh_sq(u);
            }
            log_probs.push(lp);
        }
        Ok(PolicySample { batch, cache, mean, log_std, raw_tanh, noise: noise.to_vec(), actions, log_probs })
    }

    pub fn sample_batch<R: Rng + ?Sized>(&self, obs: &[T], batch: usize, rng: &mut R) -> Result<PolicySample<T>> {
        let noise = standard_normal(rng, batch * self.act_dim);
        self.sample_with_noise(obs, batch, &noise)
    }

    /// Single-observation draw: action in `[-1, 1]^A` and its log-density.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &[T], rng: &mut R) -> Result<(Vec<T>, T)> {
        let s = self.sample_batch(obs, 1, rng)?;
        Ok((s.actions, s.log_probs[0]))
    }

    /// `tanh(mean)` for a single observation.
    pub fn mode(&self, obs: &[T]) -> Result<Vec<T>> {
        let (_, mean, _, _) = self.heads(obs, 1)?;
        Ok(mean.into_iter().map(|m| m.tanh()).collect())
    }

    /// Log-density of a given squashed action (components strictly inside (-1, 1)).
    pub fn log_prob(&self, obs: &[T], action: &[T]) -> Result<T> {
        let (_, mean, log_std, _) = self.heads(obs, 1)?;
        let mut lp = T::zero();
        for d in 0..self.act_dim {
            let u = action[d].atanh();
            let z = (u - mean[d]) / log_std[d].exp();
            lp += -T::lit(0.5) * z * z - log_std[d] - T::lit(HALF_LN_2PI) - log_one_minus_tanh_sq(u);
        }
        Ok(lp)
    }

    /// Accumulates parameter gradients of a loss given `dL/d action` and
    /// `dL/d log_prob` for every sample of `s`.
    pub fn backward(&self, s: &PolicySample<T>, d_actions: &[T], d_log_probs: &[T], grads: &mut [T]) -> Result<()> {
        let a = self.act_dim;
        if d_actions.len() != s.batch * a || d_log_probs.len() != s.batch {
            return Err(Error::Shape("policy upstream gradients do not match sample".into()));
        }
        let two = T::lit(2.0);
        let half_span = T::lit(0.5) * (self.log_std_max - self.log_std_min);
        let mut d_out = vec![T::zero(); s.batch * 2 * a];
        for r in 0..s.batch {
            let glp = d_log_probs[r];
            for d in 0..a {
                let i = r * a + d;
                let act = s.actions[i];
                let std = s.log_std[i].exp();
                // -log(1 - tanh(u)^2) has derivative 2 tanh(u)
                let du = d_actions[i] * (T::one() - act * act) + glp * two * act;
                let dls = du * std * s.noise[i] - glp;
                d_out[r * 2 * a + d] = du;
                d_out[r * 2 * a + a + d] = dls * half_span * (T::one() - s.raw_tanh[i] * s.raw_tanh[i]);
            }
        }
        self.net.backward(&s.cache, &d_out, Some(grads), false)?;
        Ok(())
    }
}

/// Deterministic `tanh`-bounded actor.
#[derive(Clone, Debug, PartialEq)]
pub struct DeterministicPolicy<T> {
    pub net: Mlp<T>,
}

impl<T: Scalar> DeterministicPolicy<T> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(act_dim);
        let acts = vec![Activation::Tanh; hidden.len() + 1];
        Ok(Self { net: Mlp::new(&sizes, &acts, !hidden.is_empty(), rng)? })
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn forward(&self, obs: &[T], batch: usize) -> Result<MlpCache<T>> {
        self.net.forward(obs, batch)
    }

    pub fn act(&self, obs: &[T]) -> Result<Vec<T>> {
        self.net.predict(obs)
    }

    pub fn backward(&self, cache: &MlpCache<T>, d_actions: &[T], grads: &mut [T]) -> Result<()> {
        self.net.backward(cache, d_actions, Some(grads), false)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy_1d(mean_bias: f64, log_std_raw: f64) -> GaussianPolicy<f64> {
        // zero weights: heads are pure biases, independent of the observation
        let net = Mlp::zeros(&[2, 3, 2], &[Activation::Tanh, Activation::Identity], false).unwrap();
        let mut p = GaussianPolicy::from_net(net, 1).unwrap();
        let n = p.net.num_params();
        p.net.params_mut()[n - 2] = mean_bias;
        p.net.params_mut()[n - 1] = log_std_raw;
        p
    }

    #[test]
    fn stable_log_det_matches_naive_in_safe_range() {
        for u in [-3.0, -0.5, 0.0, 0.7, 2.5f64] {
            let naive = (1.0 - u.tanh().powi(2)).ln();
            assert!((log_one_minus_tanh_sq(u) - naive).abs() < 1e-12);
        }
        assert!(log_one_minus_tanh_sq(40.0f64).is_finite());
    }

    #[test]
    fn density_integrates_to_one() {
        for (m, s) in [(0.0, 0.0), (0.8, -1.0), (-1.0, 0.5), (0.3, -2.0)] {
            let p = policy_1d(m, s);
            // integrate over u = atanh(a) to avoid endpoint singularities:
            // int p(a) da = int p(a(u)) (1 - tanh^2 u) du
            let (lo, hi, n) = (-18.0, 18.0, 600_000);
            let h = (hi - lo) / n as f64;
            let mut total = 0.0;
            for i in 0..=n {
                let u: f64 = lo + i as f64 * h;
                let a = u.tanh();
                if a.abs() >= 1.0 {
                    continue;
                }
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                total += w * (p.log_prob(&[0.0, 0.0], &[a]).unwrap() + log_one_minus_tanh_sq(u)).exp();
            }
            assert!((total * h - 1.0).abs() < 1e-6, "integral {}", total * h);
        }
    }

    #[test]
    fn floor_std_collapses_to_tanh_mean() {
        // raw log-std far negative saturates at the clamp floor
        let p = policy_1d(0.6, -50.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let std = LOG_STD_MIN.exp();
        for _ in 0..100 {
            let (a, _) = p.sample(&[0.0, 0.0], &mut rng).unwrap();
            assert!((a[0] - 0.6f64.tanh()).abs() < 5.0 * std);
        }
        assert_eq!(p.mode(&[0.0, 0.0]).unwrap(), vec![0.6f64.tanh()]);
    }

    #[test]
    fn sampled_log_prob_matches_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = GaussianPolicy::<f64>::new(3, 2, &[8, 8], &mut rng).unwrap();
        let obs = [0.2, -0.4, 0.9];
        let (a, lp) = p.sample(&obs, &mut rng).unwrap();
        assert!((p.log_prob(&obs, &a).unwrap() - lp).abs() < 1e-9);
    }

    #[test]
    fn log_prob_gradient_wrt_mean_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = GaussianPolicy::<f64>::new(3, 2, &[5, 4], &mut rng).unwrap();
        let obs = [0.1, 0.5, -0.3];
        let noise = [0.4, -1.1];
        let s = p.sample_with_noise(&obs, 1, &noise).unwrap();
        let mut g = p.net.zero_grads();
        p.backward(&s, &[0.0, 0.0], &[1.0], &mut g).unwrap();
        let n = p.net.num_params();
        // mean-head biases sit just before the log-std-head biases
        for d in 0..2 {
            let idx = n - 4 + d;
            let h = 1e-6;
            let mut q = p.clone();
            q.net.params_mut()[idx] += h;
            let up = q.sample_with_noise(&obs, 1, &noise).unwrap().log_probs[0];
            q.net.params_mut()[idx] -= 2.0 * h;
            let down = q.sample_with_noise(&obs, 1, &noise).unwrap().log_probs[0];
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g[idx]).abs() <= 1e-4 * fd.abs().max(1e-6), "{fd} vs {}", g[idx]);
        }
    }

    #[test]
    fn actions_stay_in_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = GaussianPolicy::<f32>::new(4, 3, &[16, 16], &mut rng).unwrap();
        let obs: Vec<f32> = (0..64 * 4).map(|i| (i as f32 * 0.37).sin() * 3.0).collect();
        let s = p.sample_batch(&obs, 64, &mut rng).unwrap();
        assert!(s.actions.iter().all(|a| (-1.0..=1.0).contains(a)));
        assert!(s.log_probs.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn deterministic_policy_is_bounded_and_repeatable() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = DeterministicPolicy::<f64>::new(3, 2, &[6, 6], &mut rng).unwrap();
        let a = p.act(&[5.0, -5.0, 1.0]).unwrap();
        assert_eq!(a, p.act(&[5.0, -5.0, 1.0]).unwrap());
        assert!(a.iter().all(|x| x.abs() <= 1.0));
    }
}
