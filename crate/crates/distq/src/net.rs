//! Minimal feed-forward network engine.
//!
//! Probability controllers and fusion estimators are small dense networks
//! (three hidden layers of 20–30 units), so this module implements exactly
//! what they need and nothing more: forward evaluation, reverse-mode
//! gradients of `⟨upstream, forward(x)⟩` with respect to every parameter and
//! the input, an Adam optimizer, and a self-describing JSON checkpoint whose
//! round-trip is bit-exact on values.
//!
//! All math is 64-bit; bound evaluations downstream need ~1e-10 agreement
//! with closed-form oracles and would drown in single-precision noise.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// Activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Softmax,
    Identity,
}

/// One dense layer: row-major `out × in` weights, a bias per output, and an
/// activation tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
    in_dim: usize,
    out_dim: usize,
}

impl Layer {
    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Row-major `out × in` weight matrix.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for row in 0..self.out_dim {
            let mut z = self.bias[row];
            let w = &self.weights[row * self.in_dim..(row + 1) * self.in_dim];
            for (wi, xi) in w.iter().zip(input) {
                z += wi * xi;
            }
            out.push(z);
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    // Branch on sign to avoid overflowing exp for large |z|.
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn activate(activation: Activation, pre: &[f64], out: &mut Vec<f64>) {
    out.clear();
    match activation {
        Activation::Relu => out.extend(pre.iter().map(|&z| z.max(0.0))),
        Activation::Sigmoid => out.extend(pre.iter().map(|&z| sigmoid(z))),
        Activation::Tanh => out.extend(pre.iter().map(|&z| z.tanh())),
        Activation::Identity => out.extend_from_slice(pre),
        Activation::Softmax => {
            // Max-subtraction keeps exp in range for any finite input.
            let max = pre.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            out.extend(pre.iter().map(|&z| (z - max).exp()));
            let total: f64 = out.iter().sum();
            for v in out.iter_mut() {
                *v /= total;
            }
        }
    }
}

/// Pull an upstream gradient back through an activation: given the layer's
/// post-activation values `post`, pre-activation values `pre`, and the
/// gradient `upstream` with respect to the post-activation outputs, write the
/// gradient with respect to the pre-activation values into `delta`.
fn activation_backward(
    activation: Activation,
    pre: &[f64],
    post: &[f64],
    upstream: &[f64],
    delta: &mut Vec<f64>,
) {
    delta.clear();
    match activation {
        Activation::Relu => {
            delta.extend(pre.iter().zip(upstream).map(|(&z, &u)| if z > 0.0 { u } else { 0.0 }))
        }
        Activation::Sigmoid => {
            delta.extend(post.iter().zip(upstream).map(|(&a, &u)| u * a * (1.0 - a)))
        }
        Activation::Tanh => {
            delta.extend(post.iter().zip(upstream).map(|(&a, &u)| u * (1.0 - a * a)))
        }
        Activation::Identity => delta.extend_from_slice(upstream),
        Activation::Softmax => {
            // Full Jacobian: δ_i = a_i (u_i − Σ_j u_j a_j).
            let dot: f64 = upstream.iter().zip(post).map(|(&u, &a)| u * a).sum();
            delta.extend(post.iter().zip(upstream).map(|(&a, &u)| a * (u - dot)));
        }
    }
}

/// Feed-forward network: a chain of dense layers with matching dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Cached intermediate values from a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Network output (post-activation of the last layer).
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("trace always has at least one layer")
    }
}

/// Per-parameter gradients (or any other per-parameter aggregate, e.g. Adam
/// moments), shaped exactly like the network's weights and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpGradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// `self += scale · other`; shapes must match.
    pub fn accumulate(&mut self, other: &MlpGradients, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    fn matches(&self, net: &Mlp) -> bool {
        self.weights.len() == net.layers.len()
            && self.biases.len() == net.layers.len()
            && self
                .weights
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.len() == l.weights.len())
            && self
                .biases
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.len() == l.bias.len())
    }
}

impl Mlp {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    /// Activation of the output layer.
    pub fn head(&self) -> Activation {
        self.layers.last().expect("network has at least one layer").activation
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Forward pass returning only the output vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.post.pop().expect("at least one layer"))
    }

    /// Forward pass that caches pre- and post-activations for `backward`.
    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.input_dim() {
            return Err(Error::Config(format!(
                "input dimension {} does not match network input {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericDomain("non-finite network input".into()));
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut current: Vec<f64> = x.to_vec();
        for layer in &self.layers {
            let mut z = Vec::with_capacity(layer.out_dim);
            layer.affine(&current, &mut z);
            let mut a = Vec::with_capacity(layer.out_dim);
            activate(layer.activation, &z, &mut a);
            current = a.clone();
            pre.push(z);
            post.push(a);
        }
        Ok(ForwardTrace {
            input: x.to_vec(),
            pre,
            post,
        })
    }

    /// Convenience for scalar-to-scalar networks (probability controllers and
    /// the binary fusion estimator).
    pub fn scalar(&self, x: f64) -> Result<f64> {
        let out = self.forward(&[x])?;
        if out.len() != 1 {
            return Err(Error::Config(format!(
                "scalar evaluation needs output dimension 1, network has {}",
                out.len()
            )));
        }
        Ok(out[0])
    }

    /// Exact gradients of `⟨upstream, forward(x)⟩` with respect to every
    /// weight, bias, and the input.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &[f64]) -> Result<(MlpGradients, Vec<f64>)> {
        if upstream.len() != self.output_dim() {
            return Err(Error::Config(format!(
                "upstream dimension {} does not match network output {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let mut grads = MlpGradients::zeros_like(self);
        let mut u: Vec<f64> = upstream.to_vec();
        let mut delta = Vec::new();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            activation_backward(layer.activation, &trace.pre[i], &trace.post[i], &u, &mut delta);
            let below: &[f64] = if i == 0 { &trace.input } else { &trace.post[i - 1] };
            let gw = &mut grads.weights[i];
            for (row, &d) in delta.iter().enumerate() {
                let offset = row * layer.in_dim;
                for (col, &a) in below.iter().enumerate() {
                    gw[offset + col] += d * a;
                }
            }
            grads.biases[i].copy_from_slice(&delta);
            // Upstream for the layer below: Wᵀ δ.
            let mut next_u = vec![0.0; layer.in_dim];
            for (row, &d) in delta.iter().enumerate() {
                let w = &layer.weights[row * layer.in_dim..(row + 1) * layer.in_dim];
                for (col, &wv) in w.iter().enumerate() {
                    next_u[col] += wv * d;
                }
            }
            u = next_u;
        }
        Ok((grads, u))
    }

    /// Rebuild a network from explicit parts (checkpoint loading, tests).
    pub fn from_parts(
        layer_sizes: &[usize],
        activations: &[Activation],
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        validate_shape(layer_sizes, activations)?;
        if weights.len() != activations.len() || biases.len() != activations.len() {
            return Err(Error::Config("wrong number of weight/bias arrays".into()));
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (i, &activation) in activations.iter().enumerate() {
            let (in_dim, out_dim) = (layer_sizes[i], layer_sizes[i + 1]);
            if weights[i].len() != in_dim * out_dim || biases[i].len() != out_dim {
                return Err(Error::Config(format!(
                    "layer {i}: expected {out_dim}x{in_dim} weights and {out_dim} biases, got {} and {}",
                    weights[i].len(),
                    biases[i].len()
                )));
            }
            layers.push(Layer {
                weights: weights[i].clone(),
                bias: biases[i].clone(),
                activation,
                in_dim,
                out_dim,
            });
        }
        Ok(Mlp { layers })
    }
}

fn validate_shape(layer_sizes: &[usize], activations: &[Activation]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config("network needs at least input and output sizes".into()));
    }
    if activations.len() != layer_sizes.len() - 1 {
        return Err(Error::Config(format!(
            "expected {} activations for {} layer sizes, got {}",
            layer_sizes.len() - 1,
            layer_sizes.len(),
            activations.len()
        )));
    }
    if layer_sizes.iter().any(|&s| s == 0) {
        return Err(Error::Config("zero-width layer".into()));
    }
    Ok(())
}

/// Initialize a network: weights uniform in `[-s, s]` with
/// `s = sqrt(6 / (fan_in + fan_out))`, biases zero; deterministic per seed.
///
/// The scale keeps sigmoid/tanh heads in their linear region at these widths,
/// so early training is not saturated.
pub fn init_mlp(layer_sizes: &[usize], activations: &[Activation], seed: u64) -> Result<Mlp> {
    validate_shape(layer_sizes, activations)?;
    let mut layers = Vec::with_capacity(activations.len());
    for (i, &activation) in activations.iter().enumerate() {
        let (in_dim, out_dim) = (layer_sizes[i], layer_sizes[i + 1]);
        let scale = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut rng = stream(seed, Purpose::NetInit, i as u64);
        let weights = (0..in_dim * out_dim)
            .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        layers.push(Layer {
            weights,
            bias: vec![0.0; out_dim],
            activation,
            in_dim,
            out_dim,
        });
    }
    Ok(Mlp { layers })
}

/// Adam optimizer state: per-parameter first/second moments plus the step
/// counter used for bias correction.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    first_moment: MlpGradients,
    second_moment: MlpGradients,
    step_count: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    learning_rate: f64,
}

impl OptimizerState {
    /// Fresh state with the canonical constants `(β₁, β₂, ε) = (0.9, 0.999, 1e-8)`.
    pub fn new(net: &Mlp, learning_rate: f64) -> Self {
        OptimizerState {
            first_moment: MlpGradients::zeros_like(net),
            second_moment: MlpGradients::zeros_like(net),
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }
}

/// One bias-corrected Adam update, applied in place. Non-finite gradients
/// reject the step: parameters, moments, and the step counter stay untouched.
pub fn adam_step(state: &mut OptimizerState, net: &mut Mlp, grads: &MlpGradients) -> Result<()> {
    if !grads.matches(net) {
        return Err(Error::Config("gradient shape does not match network".into()));
    }
    if !grads.is_finite() {
        return Err(Error::NumericDomain("non-finite gradient; step rejected".into()));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for (l, layer) in net.layers.iter_mut().enumerate() {
        let update = |params: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..params.len() {
                m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
                v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                params[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
            }
        };
        update(
            &mut layer.weights,
            &grads.weights[l],
            &mut state.first_moment.weights[l],
            &mut state.second_moment.weights[l],
        );
        update(
            &mut layer.bias,
            &grads.biases[l],
            &mut state.first_moment.biases[l],
            &mut state.second_moment.biases[l],
        );
    }
    Ok(())
}

/// Self-describing checkpoint: format version, shape, parameters, and the
/// seed the training run used. Serialized as JSON; values round-trip
/// bit-exactly (shortest-representation float printing).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    /// Row-major `out × in` weight matrix per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Current checkpoint format version.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

impl Mlp {
    pub fn to_checkpoint(&self, seed: u64) -> NetCheckpoint {
        let mut layer_sizes = vec![self.input_dim()];
        layer_sizes.extend(self.layers.iter().map(|l| l.out_dim));
        NetCheckpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            layer_sizes,
            activations: self.layers.iter().map(|l| l.activation).collect(),
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.bias.clone()).collect(),
            seed,
        }
    }

    pub fn from_checkpoint(checkpoint: &NetCheckpoint) -> Result<Self> {
        if checkpoint.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint format version {}",
                checkpoint.format_version
            )));
        }
        Mlp::from_parts(
            &checkpoint.layer_sizes,
            &checkpoint.activations,
            checkpoint.weights.clone(),
            checkpoint.biases.clone(),
        )
    }
}

/// Write a checkpoint as pretty JSON.
pub fn save_checkpoint(path: &std::path::Path, checkpoint: &NetCheckpoint) -> Result<()> {
    let text = serde_json::to_string_pretty(checkpoint)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Read a checkpoint written by `save_checkpoint`.
pub fn load_checkpoint(path: &std::path::Path) -> Result<NetCheckpoint> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
