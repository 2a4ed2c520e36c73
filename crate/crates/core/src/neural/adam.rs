use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Bias-corrected Adam over a flat parameter slice.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize, lr: T) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One descent step: `params -= lr * m_hat / (sqrt(v_hat) + eps)`.
    ///
    /// Gradient ascent is obtained by passing the negated gradient.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state sized {} got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let step_size = self.lr / c1;
        let c2_sqrt = c2.sqrt();
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let denom = self.v[i].sqrt() / c2_sqrt + self.eps;
            params[i] -= step_size * self.m[i] / denom;
        }
        Ok(())
    }
}
