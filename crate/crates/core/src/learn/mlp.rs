//! Fully connected ReLU network over a flat parameter vector. Each layer
//! stores its weight matrix (out × in, row-major) followed by its bias.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations of one batched forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    pub batch: usize,
    /// `acts[0]` is the input, `acts[l]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape has an input")
    }
}

/// C (m × n) ← A (m × k) · B (k × n) + beta · C with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], sa: (usize, usize), b: &[f64], sb: (usize, usize), beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    let last = |rows: usize, cols: usize, (rs, cs): (usize, usize)| (rows - 1) * rs + (cols - 1) * cs;
    if k > 0 {
        assert!(last(m, k, sa) < a.len() && last(k, n, sb) < b.len());
    }
    assert!(m * n <= c.len());
    // SAFETY: every index touched by the kernel is bounded by the asserts
    // above and C has unit column stride with row stride n, so it never aliases.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            sa.0 as isize,
            sa.1 as isize,
            b.as_ptr(),
            sb.0 as isize,
            sb.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Mlp {
    /// He-initialized weights and zero biases.
    pub fn new<R: Rng>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut off = 0;
        for w in sizes.windows(2) {
            let (i, o) = (w[0], w[1]);
            let std = (2.0 / i as f64).sqrt();
            for p in &mut net.params[off..off + i * o] {
                let z: f64 = StandardNormal.sample(rng);
                *p = z * std;
            }
            off += i * o + o;
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Mlp { sizes: sizes.to_vec(), params: vec![0.0; n] })
    }

    pub fn from_parts(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        let net = Self::zeros(&sizes)?;
        if net.params.len() != params.len() {
            return Err(Error::Shape { expected: net.params.len(), got: params.len() });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Parse("non-finite network parameter".into()));
        }
        Ok(Mlp { sizes, params })
    }

    /// The network restricted to inputs `start..start + len`, equal to the
    /// full network on inputs that are zero elsewhere.
    pub fn input_slice(&self, start: usize, len: usize) -> Result<Mlp> {
        let (i, o) = (self.sizes[0], self.sizes[1]);
        if len == 0 || start + len > i {
            return Err(Error::Shape { expected: i, got: start + len });
        }
        let mut sizes = self.sizes.clone();
        sizes[0] = len;
        let mut params = Vec::with_capacity(self.params.len() - o * (i - len));
        for r in 0..o {
            params.extend_from_slice(&self.params[r * i + start..r * i + start + len]);
        }
        params.extend_from_slice(&self.params[i * o..]);
        Ok(Mlp { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two layers")
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// (weight offset, bias offset) of every layer.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.sizes.len() - 1);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            out.push((off, off + w[0] * w[1]));
            off += w[0] * w[1] + w[1];
        }
        out
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let tape = self.forward_batch(x, 1)?;
        Ok(tape.acts.into_iter().last().expect("tape has an output"))
    }

    /// Forward pass over `batch` row-major inputs.
    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<Tape> {
        let d = self.input_dim();
        if x.len() != batch * d {
            return Err(Error::Shape { expected: batch * d, got: x.len() });
        }
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for (l, (wo, bo)) in self.offsets().into_iter().enumerate() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let mut y = Vec::with_capacity(batch * o);
            for _ in 0..batch {
                y.extend_from_slice(&self.params[bo..bo + o]);
            }
            // Y += X · Wᵀ
            gemm(batch, i, o, &acts[l], (i, 1), &self.params[wo..], (1, i), 1.0, &mut y);
            if l + 1 < layers {
                for v in &mut y {
                    *v = v.max(0.0);
                }
            }
            acts.push(y);
        }
        Ok(Tape { batch, acts })
    }

    /// Backpropagates `dy` (∂loss/∂output, batch × out). Parameter gradients
    /// are added into `grad`; the input gradient is returned.
    pub fn backward(&self, tape: &Tape, dy: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        let n = tape.batch;
        if dy.len() != n * self.output_dim() {
            return Err(Error::Shape { expected: n * self.output_dim(), got: dy.len() });
        }
        if grad.len() != self.params.len() {
            return Err(Error::Shape { expected: self.params.len(), got: grad.len() });
        }
        let offs = self.offsets();
        let mut dz = dy.to_vec();
        for l in (0..offs.len()).rev() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let (wo, bo) = offs[l];
            let x = &tape.acts[l];
            // dW += dZᵀ · X
            gemm(o, n, i, &dz, (1, o), x, (i, 1), 1.0, &mut grad[wo..wo + o * i]);
            for r in 0..n {
                for j in 0..o {
                    grad[bo + j] += dz[r * o + j];
                }
            }
            // dX = dZ · W
            let mut dx = vec![0.0; n * i];
            gemm(n, o, i, &dz, (o, 1), &self.params[wo..], (i, 1), 0.0, &mut dx);
            if l > 0 {
                for (g, a) in dx.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            dz = dx;
        }
        Ok(dz)
    }

    pub fn sgd_step(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::Shape { expected: self.params.len(), got: grad.len() });
        }
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p -= lr * g;
        }
        Ok(())
    }

    fn same_shape(&self, other: &Mlp) -> Result<()> {
        if self.sizes != other.sizes {
            return Err(Error::Shape { expected: self.params.len(), got: other.params.len() });
        }
        Ok(())
    }

    /// Hard target sync.
    pub fn copy_from(&mut self, other: &Mlp) -> Result<()> {
        self.same_shape(other)?;
        self.params.copy_from_slice(&other.params);
        Ok(())
    }

    /// Soft target sync: θ' ← (1 − τ)θ' + τθ.
    pub fn soft_update(&mut self, other: &Mlp, tau: f64) -> Result<()> {
        self.same_shape(other)?;
        for (t, s) in self.params.iter_mut().zip(&other.params) {
            *t = (1.0 - tau) * *t + tau * s;
        }
        Ok(())
    }
}

/// Scales `grad` so its L2 norm is at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for g in grad.iter_mut() {
            *g *= s;
        }
    }
    norm
}

/// One clipped gradient-descent step.
pub fn descend(net: &mut Mlp, grad: &mut [f64], lr: f64, max_norm: f64) -> Result<()> {
    clip_grad_norm(grad, max_norm);
    net.sgd_step(grad, lr)
}
