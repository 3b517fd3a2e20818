//! Small dense networks with hand-written reverse mode.
//!
//! Hidden layers are `tanh(W x + b)`; the last layer is affine and is
//! followed by the output head (identity for the critic, `scale * sigmoid`
//! for the actor mean).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputHead {
    Linear,
    ScaledSigmoid { scale: f64 },
}

/// Affine layer, weights stored row-major as `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Dense {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Dense>,
    pub head: OutputHead,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input followed by every hidden activation.
    inputs: Vec<Vec<f64>>,
    /// Final affine output, before the head.
    logits: Vec<f64>,
    pub output: Vec<f64>,
}

/// Gradients with the same layout as [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl MlpParams {
    /// All-zero network with layer widths `sizes` (input first, output last).
    pub fn zeros(sizes: &[usize], head: OutputHead) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        MlpParams {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            head,
        }
    }

    /// Glorot-uniform weights, zero biases; the last layer is scaled by
    /// `last_gain`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], head: OutputHead, last_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes, head);
        let last = net.layers.len() - 1;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let limit = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
            let gain = if i == last { last_gain } else { 1.0 };
            for w in &mut layer.weights {
                *w = gain * limit * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        net
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Widths of every layer boundary, input first.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.out_dim));
        s
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(input)?.output)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<MlpCache> {
        Error::check_len(self.input_dim(), input.len())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = input.to_vec();
        let last = self.layers.len() - 1;
        let mut logits = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&current);
            inputs.push(std::mem::take(&mut current));
            if i == last {
                logits = z;
            } else {
                current = z.into_iter().map(f64::tanh).collect();
            }
        }
        let output = match self.head {
            OutputHead::Linear => logits.clone(),
            OutputHead::ScaledSigmoid { scale } => logits.iter().map(|z| scale * sigmoid(*z)).collect(),
        };
        Ok(MlpCache { inputs, logits, output })
    }

    /// Reverse pass: parameter gradients of `upstream . output`.
    pub fn backward(&self, cache: &MlpCache, upstream: &[f64]) -> Result<MlpGrads> {
        Error::check_len(self.output_dim(), upstream.len())?;
        let mut delta: Vec<f64> = match self.head {
            OutputHead::Linear => upstream.to_vec(),
            OutputHead::ScaledSigmoid { scale } => cache
                .logits
                .iter()
                .zip(upstream)
                .map(|(z, g)| {
                    let s = sigmoid(*z);
                    g * scale * s * (1.0 - s)
                })
                .collect(),
        };
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[i];
            let mut g = Dense::zeros(layer.in_dim, layer.out_dim);
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] = *d;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (w, xi) in row.iter_mut().zip(x) {
                    *w = d * xi;
                }
            }
            if i > 0 {
                // x is tanh of the previous pre-activation: d tanh = 1 - tanh^2.
                let mut back = vec![0.0; layer.in_dim];
                for (o, d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (b, w) in back.iter_mut().zip(row) {
                        *b += d * w;
                    }
                }
                delta = back.iter().zip(x).map(|(b, a)| b * (1.0 - a * a)).collect();
            }
            grads.push(g);
        }
        grads.reverse();
        Ok(MlpGrads { layers: grads })
    }

    /// Parameters flattened layer by layer: weights then bias.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        Error::check_len(self.num_params(), values.len())?;
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// `self += step * grads`.
    pub fn add_scaled(&mut self, grads: &MlpGrads, step: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, gw) in l.weights.iter_mut().zip(&g.weights) {
                *w += step * gw;
            }
            for (b, gb) in l.bias.iter_mut().zip(&g.bias) {
                *b += step * gb;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        MlpGrads {
            layers: params.layers.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &MlpGrads, scale: f64) {
        for (l, g) in self.layers.iter_mut().zip(&other.layers) {
            for (w, gw) in l.weights.iter_mut().zip(&g.weights) {
                *w += scale * gw;
            }
            for (b, gb) in l.bias.iter_mut().zip(&g.bias) {
                *b += scale * gb;
            }
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }
}

/// Gradients of `upstream . net(input)` with respect to every parameter.
pub fn mlp_backward(params: &MlpParams, input: &[f64], upstream: &[f64]) -> Result<MlpGrads> {
    let cache = params.forward_cached(input)?;
    params.backward(&cache, upstream)
}
