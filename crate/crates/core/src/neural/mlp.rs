//! Fully connected networks with a hand-written reverse pass.
//!
//! Parameters live in one flat vector so optimizers, target blending and
//! checkpoints treat a network as a single slice. Per layer the layout is the
//! row-major weight matrix (`out x in`) followed by the bias; when layer
//! normalization is enabled its gain and shift follow the first layer's bias.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Identity => T::one(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LayerOffsets {
    weight: usize,
    bias: usize,
}

/// Multilayer perceptron parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    layer_norm: bool,
    offsets: Vec<LayerOffsets>,
    ln_offset: usize,
    params: Vec<T>,
}

/// Everything the reverse pass needs from a forward call.
#[derive(Clone, Debug)]
pub struct MlpCache<T> {
    batch: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<T>>,
    ln_xhat: Vec<T>,
    ln_rstd: Vec<T>,
}

impl<T> MlpCache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[T] {
        self.acts.last().expect("cache holds at least the input")
    }

    pub fn input(&self) -> &[T] {
        &self.acts[0]
    }
}

impl<T: Scalar> Mlp<T> {
    /// Zero-initialized network with the given layer sizes `[in, h1, .., out]`.
    pub fn zeros(sizes: &[usize], activations: &[Activation], layer_norm: bool) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(Error::Shape(format!(
                "{} sizes need {} activations, got {}",
                sizes.len(),
                sizes.len().saturating_sub(1),
                activations.len()
            )));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Shape("layer sizes must be positive".into()));
        }
        if layer_norm && sizes.len() < 3 {
            return Err(Error::Shape("layer normalization needs a hidden layer".into()));
        }
        let mut offsets = Vec::with_capacity(activations.len());
        let mut cursor = 0;
        let mut ln_offset = 0;
        for l in 0..activations.len() {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            offsets.push(LayerOffsets { weight: cursor, bias: cursor + fan_in * fan_out });
            cursor += fan_in * fan_out + fan_out;
            if l == 0 && layer_norm {
                ln_offset = cursor;
                cursor += 2 * fan_out;
            }
        }
        let mut mlp = Self {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            layer_norm,
            offsets,
            ln_offset,
            params: vec![T::zero(); cursor],
        };
        if layer_norm {
            let h = sizes[1];
            mlp.params[ln_offset..ln_offset + h].fill(T::one());
        }
        Ok(mlp)
    }

    /// Fan-in uniform weights `U(-1/sqrt(in), 1/sqrt(in))`, zero biases.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        activations: &[Activation],
        layer_norm: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let mut mlp = Self::zeros(sizes, activations, layer_norm)?;
        for l in 0..mlp.activations.len() {
            let (fan_in, fan_out) = (mlp.sizes[l], mlp.sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = mlp.offsets[l].weight;
            for p in &mut mlp.params[w..w + fan_in * fan_out] {
                *p = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(mlp)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn layer_norm(&self) -> bool {
        self.layer_norm
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.activations == other.activations && self.layer_norm == other.layer_norm
    }

    /// Weight matrix of layer `l`, row-major `out x in`.
    pub fn weight(&self, l: usize) -> &[T] {
        let o = self.offsets[l];
        &self.params[o.weight..o.bias]
    }

    pub fn bias(&self, l: usize) -> &[T] {
        let o = self.offsets[l];
        &self.params[o.bias..o.bias + self.sizes[l + 1]]
    }

    /// Layer-norm gain and shift, when enabled.
    pub fn ln_params(&self) -> Option<(&[T], &[T])> {
        self.layer_norm.then(|| {
            let h = self.sizes[1];
            (&self.params[self.ln_offset..self.ln_offset + h], &self.params[self.ln_offset + h..self.ln_offset + 2 * h])
        })
    }

    /// Batched forward pass over `batch` rows of `input`.
    pub fn forward(&self, input: &[T], batch: usize) -> Result<MlpCache<T>> {
        if input.len() != batch * self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} values, expected {} rows of {}",
                input.len(),
                batch,
                self.input_dim()
            )));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        let mut acts = Vec::with_capacity(self.sizes.len());
        acts.push(input.to_vec());
        let mut ln_xhat = Vec::new();
        let mut ln_rstd = Vec::new();
        for l in 0..self.activations.len() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &acts[l];
            let mut z = Vec::with_capacity(batch * fan_out);
            for _ in 0..batch {
                z.extend_from_slice(self.bias(l));
            }
            // z += x * W^T
            T::gemm(
                batch,
                fan_in,
                fan_out,
                T::one(),
                x,
                fan_in as isize,
                1,
                self.weight(l),
                1,
                fan_in as isize,
                T::one(),
                &mut z,
                fan_out as isize,
                1,
            );
            if l == 0 && self.layer_norm {
                let (gain, shift) = self.ln_params().unwrap();
                ln_xhat = vec![T::zero(); batch * fan_out];
                ln_rstd = vec![T::zero(); batch];
                let n = T::lit(fan_out as f64);
                for r in 0..batch {
                    let row = &mut z[r * fan_out..(r + 1) * fan_out];
                    let mean = row.iter().copied().sum::<T>() / n;
                    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
                    let rstd = T::one() / (var + T::lit(LN_EPS)).sqrt();
                    ln_rstd[r] = rstd;
                    for (j, v) in row.iter_mut().enumerate() {
                        let xh = (*v - mean) * rstd;
                        ln_xhat[r * fan_out + j] = xh;
                        *v = gain[j] * xh + shift[j];
                    }
                }
            }
            let act = self.activations[l];
            if act != Activation::Identity {
                for v in z.iter_mut() {
                    *v = act.apply(*v);
                }
            }
            acts.push(z);
        }
        Ok(MlpCache { batch, acts, ln_xhat, ln_rstd })
    }

    /// Single-row convenience forward returning only the output.
    pub fn predict(&self, input: &[T]) -> Result<Vec<T>> {
        let mut cache = self.forward(input, 1)?;
        Ok(cache.acts.pop().unwrap())
    }

    /// Reverse pass for the cached computation.
    ///
    /// `output_grad` is `dL/d output` (`batch x out`). Parameter gradients are
    /// accumulated into `grads` when given; the input gradient is returned
    /// when `want_input_grad` is set.
    pub fn backward(
        &self,
        cache: &MlpCache<T>,
        output_grad: &[T],
        mut grads: Option<&mut [T]>,
        want_input_grad: bool,
    ) -> Result<Option<Vec<T>>> {
        let batch = cache.batch;
        if cache.acts.len() != self.sizes.len()
            || cache.acts[0].len() != batch * self.input_dim()
            || (self.layer_norm && cache.ln_rstd.len() != batch)
        {
            return Err(Error::Shape("cache does not match network".into()));
        }
        if output_grad.len() != batch * self.output_dim() {
            return Err(Error::Shape(format!(
                "output gradient has {} values, expected {}",
                output_grad.len(),
                batch * self.output_dim()
            )));
        }
        if let Some(g) = grads.as_deref() {
            if g.len() != self.params.len() {
                return Err(Error::Shape("gradient buffer does not match parameters".into()));
            }
        }

        let mut delta = output_grad.to_vec();
        for l in (0..self.activations.len()).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let act = self.activations[l];
            let y = &cache.acts[l + 1];
            if act != Activation::Identity {
                for (d, &yv) in delta.iter_mut().zip(y.iter()) {
                    *d *= act.derivative_from_output(yv);
                }
            }
            if l == 0 && self.layer_norm {
                delta = self.layer_norm_backward(cache, delta, grads.as_deref_mut());
            }
            let x = &cache.acts[l];
            if let Some(g) = grads.as_deref_mut() {
                let o = self.offsets[l];
                // dW += delta^T x
                T::gemm(
                    fan_out,
                    batch,
                    fan_in,
                    T::one(),
                    &delta,
                    1,
                    fan_out as isize,
                    x,
                    fan_in as isize,
                    1,
                    T::one(),
                    &mut g[o.weight..o.bias],
                    fan_in as isize,
                    1,
                );
                let db = &mut g[o.bias..o.bias + fan_out];
                for r in 0..batch {
                    for (acc, &d) in db.iter_mut().zip(&delta[r * fan_out..(r + 1) * fan_out]) {
                        *acc += d;
                    }
                }
            }
            if l == 0 && !want_input_grad {
                return Ok(None);
            }
            let mut dx = vec![T::zero(); batch * fan_in];
            // dx = delta W
            T::gemm(
                batch,
                fan_out,
                fan_in,
                T::one(),
                &delta,
                fan_out as isize,
                1,
                self.weight(l),
                fan_in as isize,
                1,
                T::zero(),
                &mut dx,
                fan_in as isize,
                1,
            );
            delta = dx;
        }
        Ok(Some(delta))
    }

    fn layer_norm_backward(&self, cache: &MlpCache<T>, dy: Vec<T>, grads: Option<&mut [T]>) -> Vec<T> {
        let h = self.sizes[1];
        let batch = cache.batch;
        let (gain, _) = self.ln_params().unwrap();
        if let Some(g) = grads {
            let (dgain, dshift) = g[self.ln_offset..self.ln_offset + 2 * h].split_at_mut(h);
            for r in 0..batch {
                for j in 0..h {
                    dgain[j] += dy[r * h + j] * cache.ln_xhat[r * h + j];
                    dshift[j] += dy[r * h + j];
                }
            }
        }
        let n = T::lit(h as f64);
        let mut dx = vec![T::zero(); batch * h];
        for r in 0..batch {
            let xhat = &cache.ln_xhat[r * h..(r + 1) * h];
            let dxhat: Vec<T> = (0..h).map(|j| dy[r * h + j] * gain[j]).collect();
            let mean_d = dxhat.iter().copied().sum::<T>() / n;
            let mean_dx = dxhat.iter().zip(xhat).map(|(&a, &b)| a * b).sum::<T>() / n;
            let rstd = cache.ln_rstd[r];
            for j in 0..h {
                dx[r * h + j] = rstd * (dxhat[j] - mean_d - xhat[j] * mean_dx);
            }
        }
        dx
    }

    /// Fresh zeroed gradient buffer shaped like the parameters.
    pub fn zero_grads(&self) -> Vec<T> {
        vec![T::zero(); self.params.len()]
    }
}

/// `target <- (1 - tau) target + tau online`, elementwise.
pub fn soft_update<T: Scalar>(target: &mut [T], online: &[T], tau: T) {
    debug_assert_eq!(target.len(), online.len());
    let keep = T::one() - tau;
    for (t, &o) in target.iter_mut().zip(online) {
        *t = keep * *t + tau * o;
    }
}
