use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::error::{Result, SimError};
use crate::nn::matrix::Matrix;
use crate::scalar::Scalar;

/// The three client model capacities, assigned by client index modulo 3
/// when model heterogeneity is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchId {
    A1,
    A2,
    A3,
}

impl ArchId {
    /// Hidden layer widths. Output head width comes from `n_classes`.
    pub fn hidden_widths(self) -> &'static [usize] {
        match self {
            ArchId::A1 => &[64],
            ArchId::A2 => &[128, 64],
            ArchId::A3 => &[256, 128],
        }
    }

    pub fn for_client(index: usize) -> ArchId {
        match index % 3 {
            0 => ArchId::A1,
            1 => ArchId::A2,
            _ => ArchId::A3,
        }
    }
}

impl FromStr for ArchId {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a1" | "A1" => Ok(ArchId::A1),
            "a2" | "A2" => Ok(ArchId::A2),
            "a3" | "A3" => Ok(ArchId::A3),
            other => Err(SimError::config(format!("unknown arch id: {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Relu => {
                if x > S::zero() {
                    x
                } else {
                    S::zero()
                }
            }
            Activation::Linear => x,
        }
    }

    /// Derivative in terms of the pre-activation value.
    fn derivative<S: Scalar>(self, pre: S) -> S {
        match self {
            Activation::Relu => {
                if pre > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Linear => S::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<S> {
    /// `in_dim x out_dim`.
    pub weights: Matrix<S>,
    pub bias: Vec<S>,
    pub activation: Activation,
}

/// A small dense classifier: ReLU hidden layers, linear output head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet<S> {
    pub arch_id: ArchId,
    pub layers: Vec<Layer<S>>,
}

/// Per-layer gradients, same shapes as the parameters they refer to.
#[derive(Debug, Clone)]
pub struct NetGrads<S> {
    pub weights: Vec<Matrix<S>>,
    pub bias: Vec<Vec<S>>,
}

impl<S: Scalar> DenseNet<S> {
    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.cols()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.rows() * l.weights.cols() + l.bias.len())
            .sum()
    }

    /// Flattens all parameters, layer by layer, weights then bias.
    pub fn to_param_vec(&self) -> Vec<S> {
        let mut v = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            v.extend_from_slice(layer.weights.data());
            v.extend_from_slice(&layer.bias);
        }
        v
    }

    pub fn set_params(&mut self, params: &[S]) {
        assert_eq!(params.len(), self.param_count());
        let mut off = 0;
        for layer in &mut self.layers {
            let wlen = layer.weights.data().len();
            layer.weights.data_mut().copy_from_slice(&params[off..off + wlen]);
            off += wlen;
            let blen = layer.bias.len();
            layer.bias.copy_from_slice(&params[off..off + blen]);
            off += blen;
        }
    }

    /// Batch forward pass; one logits row per input row.
    pub fn forward(&self, batch: &Matrix<S>) -> Result<Matrix<S>> {
        Ok(self.forward_trace(batch)?.logits)
    }

    /// Forward pass keeping per-layer pre-activations and activations.
    pub fn forward_trace(&self, batch: &Matrix<S>) -> Result<Trace<S>> {
        if batch.cols() != self.input_dim() {
            return Err(SimError::config(format!(
                "input width {} != net input dim {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current = batch.clone();
        for layer in &self.layers {
            let mut z = current.matmul(&layer.weights)?;
            for r in 0..z.rows() {
                for (zv, &b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    *zv += b;
                }
            }
            let mut a = z.clone();
            for v in a.data_mut() {
                *v = layer.activation.apply(*v);
            }
            pre.push(z);
            post.push(a.clone());
            current = a;
        }
        let logits = post.last().unwrap().clone();
        if !logits.is_finite() {
            return Err(SimError::numeric("non-finite logits in forward pass".to_string()));
        }
        Ok(Trace { pre, post, logits })
    }

    /// Backpropagates `output_delta` (dLoss/dlogits, one row per sample)
    /// through the network.
    pub fn backward(
        &self,
        batch: &Matrix<S>,
        trace: &Trace<S>,
        output_delta: &Matrix<S>,
    ) -> Result<NetGrads<S>> {
        let n_layers = self.layers.len();
        let mut grads_w = vec![Matrix::zeros(0, 0); n_layers];
        let mut grads_b = vec![Vec::new(); n_layers];
        let mut delta = output_delta.clone();
        for l in (0..n_layers).rev() {
            let input = if l == 0 { batch } else { &trace.post[l - 1] };
            grads_w[l] = input.matmul_tn(&delta)?;
            let mut gb = vec![S::zero(); self.layers[l].bias.len()];
            for r in 0..delta.rows() {
                for (g, &d) in gb.iter_mut().zip(delta.row(r)) {
                    *g += d;
                }
            }
            grads_b[l] = gb;
            if l > 0 {
                let mut prev = delta.matmul_nt(&self.layers[l].weights)?;
                let act = self.layers[l - 1].activation;
                for (p, &z) in prev.data_mut().iter_mut().zip(trace.pre[l - 1].data()) {
                    *p = *p * act.derivative(z);
                }
                delta = prev;
            }
        }
        Ok(NetGrads {
            weights: grads_w,
            bias: grads_b,
        })
    }

    /// One SGD step: `param -= lr * grad`, elementwise.
    pub fn apply_gradient(&mut self, grads: &NetGrads<S>, lr: S) -> Result<()> {
        for (layer, (gw, gb)) in self
            .layers
            .iter_mut()
            .zip(grads.weights.iter().zip(&grads.bias))
        {
            for (w, &g) in layer.weights.data_mut().iter_mut().zip(gw.data()) {
                *w = *w - lr * g;
            }
            for (b, &g) in layer.bias.iter_mut().zip(gb) {
                *b = *b - lr * g;
            }
            if !layer.weights.is_finite() || layer.bias.iter().any(|v| !v.is_finite()) {
                return Err(SimError::numeric("non-finite parameter after step".to_string()));
            }
        }
        Ok(())
    }
}

/// Intermediate activations of a forward pass.
pub struct Trace<S> {
    pub pre: Vec<Matrix<S>>,
    pub post: Vec<Matrix<S>>,
    pub logits: Matrix<S>,
}

/// Builds a network with the given capacity profile. Initialization is
/// He-style normal on weights, zero bias, deterministic in `init_seed`.
pub fn make_model<S: Scalar>(
    arch_id: ArchId,
    input_dim: usize,
    n_classes: usize,
    init_seed: u64,
) -> Result<DenseNet<S>> {
    if input_dim == 0 || n_classes == 0 {
        return Err(SimError::config("input_dim and n_classes must be positive".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
    let mut dims = vec![input_dim];
    dims.extend_from_slice(arch_id.hidden_widths());
    dims.push(n_classes);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let scale = (2.0 / fan_in as f64).sqrt();
        let data: Vec<S> = (0..fan_in * fan_out)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                S::from_f64(g * scale)
            })
            .collect();
        layers.push(Layer {
            weights: Matrix::from_vec(fan_in, fan_out, data)?,
            bias: vec![S::zero(); fan_out],
            activation: Activation::Relu,
        });
    }
    layers.last_mut().unwrap().activation = Activation::Linear;
    Ok(DenseNet { arch_id, layers })
}
