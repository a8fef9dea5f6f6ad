//! Dense feed-forward networks with hand-written backpropagation and an Adam optimizer.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    ReLU,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::ReLU => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::ReLU => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Linear,
    Softmax,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("input has length {got}, network expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Weights are stored per layer as a flat row-major `out × in` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Checkpoint", try_from = "Checkpoint")]
pub struct NetworkParams {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// On-disk form with nested row-major weight matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Checkpoint {
    layer_dims: Vec<usize>,
    activation: Activation,
    head: Head,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
}

impl From<NetworkParams> for Checkpoint {
    fn from(p: NetworkParams) -> Self {
        let weights = p
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| w.chunks(p.layer_dims[l]).map(|r| r.to_vec()).collect())
            .collect();
        Checkpoint {
            layer_dims: p.layer_dims,
            activation: p.activation,
            head: p.head,
            weights,
            biases: p.biases,
        }
    }
}

impl TryFrom<Checkpoint> for NetworkParams {
    type Error = NetworkError;

    fn try_from(c: Checkpoint) -> Result<Self, Self::Error> {
        let weights: Vec<Vec<f64>> = c.weights.into_iter().map(|m| m.concat()).collect();
        let p = NetworkParams {
            layer_dims: c.layer_dims,
            activation: c.activation,
            head: c.head,
            weights,
            biases: c.biases,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Activations of every layer from one forward pass; `layers[0]` is the input and the last
/// entry holds the pre-head outputs.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub layers: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

impl NetworkParams {
    pub fn zeros(layer_dims: &[usize], activation: Activation, head: Head) -> Self {
        let weights = layer_dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layer_dims.windows(2).map(|w| vec![0.0; w[1]]).collect();
        Self {
            layer_dims: layer_dims.to_vec(),
            activation,
            head,
            weights,
            biases,
        }
    }

    /// Uniform ±√(6/(fan_in+fan_out)) weights and zero biases.
    pub fn random<R: Rng + ?Sized>(
        layer_dims: &[usize],
        activation: Activation,
        head: Head,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(layer_dims, activation, head);
        for (l, w) in p.weights.iter_mut().enumerate() {
            let limit = (6.0 / (layer_dims[l] + layer_dims[l + 1]) as f64).sqrt();
            for x in w.iter_mut() {
                *x = rng.gen_range(-limit..=limit);
            }
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let n = self.layer_dims.len();
        if n < 2 {
            return Err(NetworkError::Shape("need at least an input and an output layer".into()));
        }
        if self.weights.len() != n - 1 || self.biases.len() != n - 1 {
            return Err(NetworkError::Shape("layer count does not match layer_dims".into()));
        }
        for l in 0..n - 1 {
            let (i, o) = (self.layer_dims[l], self.layer_dims[l + 1]);
            if self.weights[l].len() != i * o || self.biases[l].len() != o {
                return Err(NetworkError::Shape(format!("layer {l} has wrong size")));
            }
        }
        if self.weights.iter().chain(&self.biases).flatten().any(|x| !x.is_finite()) {
            return Err(NetworkError::Shape("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NetworkError> {
        Ok(self.forward_cached(input)?.output)
    }

    /// Pre-head outputs (logits for a softmax head).
    pub fn logits(&self, input: &[f64]) -> Result<Vec<f64>, NetworkError> {
        let mut cache = self.forward_cached(input)?;
        Ok(cache.layers.pop().unwrap())
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache, NetworkError> {
        if input.len() != self.input_dim() {
            return Err(NetworkError::Dimension {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut layers = Vec::with_capacity(self.layer_dims.len());
        layers.push(input.to_vec());
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.layer_dims[l], self.layer_dims[l + 1]);
            let x = &layers[l];
            let w = &self.weights[l];
            let mut y = self.biases[l].clone();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *yo += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            if l < last {
                for v in y.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            debug_assert_eq!(y.len(), n_out);
            layers.push(y);
        }
        let pre = layers.last().unwrap();
        let output = match self.head {
            Head::Linear => pre.clone(),
            Head::Softmax => softmax(pre),
        };
        Ok(ForwardCache { layers, output })
    }

    /// Gradient of a scalar loss with respect to all parameters, given dLoss/dOutput.
    pub fn backward(&self, cache: &ForwardCache, loss_grad: &[f64]) -> Result<Gradients, NetworkError> {
        if loss_grad.len() != self.output_dim() {
            return Err(NetworkError::Dimension {
                expected: self.output_dim(),
                got: loss_grad.len(),
            });
        }
        let delta = match self.head {
            Head::Linear => loss_grad.to_vec(),
            Head::Softmax => {
                let p = &cache.output;
                let dot: f64 = p.iter().zip(loss_grad).map(|(a, b)| a * b).sum();
                p.iter().zip(loss_grad).map(|(pi, gi)| pi * (gi - dot)).collect()
            }
        };
        self.backward_pre_head(cache, &delta)
    }

    /// Like [`backward`](Self::backward) but takes dLoss/dLogits directly.
    pub fn backward_pre_head(
        &self,
        cache: &ForwardCache,
        pre_head_grad: &[f64],
    ) -> Result<Gradients, NetworkError> {
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_backward(cache, pre_head_grad, &mut grads)?;
        Ok(grads)
    }

    /// Adds the gradient for one sample to `grads`.
    pub fn accumulate_backward(
        &self,
        cache: &ForwardCache,
        pre_head_grad: &[f64],
        grads: &mut Gradients,
    ) -> Result<(), NetworkError> {
        if pre_head_grad.len() != self.output_dim() {
            return Err(NetworkError::Dimension {
                expected: self.output_dim(),
                got: pre_head_grad.len(),
            });
        }
        let mut delta = pre_head_grad.to_vec();
        for l in (0..self.num_layers()).rev() {
            let n_in = self.layer_dims[l];
            let x = &cache.layers[l];
            let gw = &mut grads.weights[l];
            for (o, d) in delta.iter().enumerate() {
                grads.biases[l][o] += d;
                if *d != 0.0 {
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    for (g, xi) in row.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let mut prev = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &w[o * n_in..(o + 1) * n_in];
                for (p, wi) in prev.iter_mut().zip(row) {
                    *p += d * wi;
                }
            }
            for (p, y) in prev.iter_mut().zip(x) {
                *p *= self.activation.derivative_from_output(*y);
            }
            delta = prev;
        }
        Ok(())
    }

    /// Soft update `self ← τ·source + (1 − τ)·self`.
    pub fn polyak_update(&mut self, source: &NetworkParams, tau: f64) {
        for (dst, src) in self
            .weights
            .iter_mut()
            .chain(self.biases.iter_mut())
            .zip(source.weights.iter().chain(&source.biases))
        {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        serde_json::from_str(text).map_err(|e| NetworkError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        std::fs::write(path, self.to_json()).map_err(|e| NetworkError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| NetworkError::Checkpoint(e.to_string()))?;
        Self::from_json(&text)
    }
}

/// Weights of every layer, then biases of every layer.
fn param_mut(p: &mut NetworkParams, slot: usize, i: usize) -> &mut f64 {
    let n = p.num_layers();
    if slot < n {
        &mut p.weights[slot][i]
    } else {
        &mut p.biases[slot - n][i]
    }
}

/// Largest relative deviation between the analytic gradient of `L = Σ cᵢ·outᵢ` and central
/// finite differences with step `h`. Relative errors use `max(|analytic|, |numeric|, 1e-6)` as
/// denominator so that vanishing entries do not dominate.
pub fn gradient_check(params: &NetworkParams, input: &[f64], loss_weights: &[f64], h: f64) -> f64 {
    let loss = |p: &NetworkParams| -> f64 {
        p.forward(input)
            .unwrap()
            .iter()
            .zip(loss_weights)
            .map(|(o, c)| o * c)
            .sum()
    };
    let cache = params.forward_cached(input).unwrap();
    let analytic = params.backward(&cache, loss_weights).unwrap();
    let mut worst = 0.0f64;
    let mut probe = params.clone();
    let n_layers = params.num_layers();
    for slot in 0..2 * n_layers {
        let len = if slot < n_layers {
            params.weights[slot].len()
        } else {
            params.biases[slot - n_layers].len()
        };
        for i in 0..len {
            let orig = *param_mut(&mut probe, slot, i);
            *param_mut(&mut probe, slot, i) = orig + h;
            let up = loss(&probe);
            *param_mut(&mut probe, slot, i) = orig - h;
            let down = loss(&probe);
            *param_mut(&mut probe, slot, i) = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = if slot < n_layers {
                analytic.weights[slot][i]
            } else {
                analytic.biases[slot - n_layers][i]
            };
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Same layout as the parameters of the network it was computed for.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(p: &NetworkParams) -> Self {
        Self {
            weights: p.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: p.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn slots(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.weights.iter().chain(&self.biases)
    }

    fn slots_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }

    pub fn scale(&mut self, k: f64) {
        for s in self.slots_mut() {
            for x in s.iter_mut() {
                *x *= k;
            }
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.slots_mut().zip(other.slots()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.slots().flatten().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slots().flatten().all(|x| x.is_finite())
    }

    /// Rescales so that the global norm does not exceed `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
    }

    fn matches(&self, p: &NetworkParams) -> bool {
        self.weights.len() == p.weights.len()
            && self.biases.len() == p.biases.len()
            && self.weights.iter().zip(&p.weights).all(|(a, b)| a.len() == b.len())
            && self.biases.iter().zip(&p.biases).all(|(a, b)| a.len() == b.len())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step_count: u64,
    pub m: Gradients,
    pub v: Gradients,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn adam(params: &NetworkParams, learning_rate: f64) -> Self {
        Self {
            step_count: 0,
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam step that descends `grads`.
pub fn optimizer_step(
    params: &mut NetworkParams,
    grads: &Gradients,
    state: &mut OptimizerState,
) -> Result<(), NetworkError> {
    if !grads.matches(params) || !state.m.matches(params) || !state.v.matches(params) {
        return Err(NetworkError::Shape("gradient/optimizer shape differs from parameters".into()));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = state.learning_rate;
    let eps = state.epsilon;
    let p_slots = params.weights.iter_mut().chain(params.biases.iter_mut());
    for (((p, g), m), v) in p_slots
        .zip(grads.slots())
        .zip(state.m.slots_mut())
        .zip(state.v.slots_mut())
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_softmax_net_is_uniform() {
        let p = NetworkParams::zeros(&[3, 4, 5], Activation::Tanh, Head::Softmax);
        let out = p.forward(&[0.3, -1.0, 2.0]).unwrap();
        for o in out {
            assert!((o - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_linear_layer() {
        let mut p = NetworkParams::zeros(&[3, 3], Activation::Tanh, Head::Linear);
        for i in 0..3 {
            p.weights[0][i * 3 + i] = 1.0;
        }
        assert_eq!(p.forward(&[1.5, -2.0, 0.25]).unwrap(), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn hand_computed_two_three_two() {
        let mut p = NetworkParams::zeros(&[2, 3, 2], Activation::Tanh, Head::Linear);
        p.weights[0] = vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6];
        p.biases[0] = vec![0.01, 0.02, 0.03];
        p.weights[1] = vec![1.0, -1.0, 0.5, 0.2, 0.3, -0.4];
        p.biases[1] = vec![0.1, -0.1];
        let x = [1.0, 2.0];
        let h = [
            (0.1 * 1.0 + 0.2 * 2.0 + 0.01f64).tanh(),
            (-0.3 * 1.0 + 0.4 * 2.0 + 0.02f64).tanh(),
            (0.5 * 1.0 - 0.6 * 2.0 + 0.03f64).tanh(),
        ];
        let y0 = 1.0 * h[0] - 1.0 * h[1] + 0.5 * h[2] + 0.1;
        let y1 = 0.2 * h[0] + 0.3 * h[1] - 0.4 * h[2] - 0.1;
        let out = p.forward(&x).unwrap();
        assert!((out[0] - y0).abs() < 1e-15 && (out[1] - y1).abs() < 1e-15);
    }

    #[test]
    fn wrong_input_length() {
        let p = NetworkParams::zeros(&[3, 2], Activation::Tanh, Head::Linear);
        assert_eq!(
            p.forward(&[1.0]),
            Err(NetworkError::Dimension { expected: 3, got: 1 })
        );
    }

    #[test]
    fn zero_loss_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = NetworkParams::random(&[4, 6, 3], Activation::Tanh, Head::Softmax, &mut rng);
        let c = p.forward_cached(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let g = p.backward(&c, &[0.0; 3]).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn linear_regression_gradient_is_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = NetworkParams::random(&[3, 2], Activation::Tanh, Head::Linear, &mut rng);
        let x = [0.5, -1.0, 2.0];
        let target = [1.0, -1.0];
        let c = p.forward_cached(&x).unwrap();
        // L = ½‖Wx + b − t‖² ⇒ ∂L/∂W = (y − t) xᵀ, ∂L/∂b = y − t.
        let e: Vec<f64> = c.output.iter().zip(&target).map(|(y, t)| y - t).collect();
        let g = p.backward(&c, &e).unwrap();
        for o in 0..2 {
            for i in 0..3 {
                assert!((g.weights[0][o * 3 + i] - e[o] * x[i]).abs() < 1e-15);
            }
            assert!((g.biases[0][o] - e[o]).abs() < 1e-15);
        }
    }

    #[test]
    fn adam_first_step_closed_form() {
        let mut p = NetworkParams::zeros(&[1, 1], Activation::Tanh, Head::Linear);
        p.weights[0][0] = 1.0;
        let mut g = Gradients::zeros_like(&p);
        g.weights[0][0] = 0.5;
        let mut s = OptimizerState::adam(&p, 0.01);
        optimizer_step(&mut p, &g, &mut s).unwrap();
        // m̂ = g, v̂ = g² on the first step.
        let expected = 1.0 - 0.01 * 0.5 / (0.5 + 1e-8);
        assert!((p.weights[0][0] - expected).abs() < 1e-15);
        assert_eq!(s.step_count, 1);
        assert!((s.m.weights[0][0] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_keeps_params_and_decays_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = NetworkParams::random(&[2, 3, 1], Activation::ReLU, Head::Linear, &mut rng);
        let mut s = OptimizerState::adam(&p, 0.01);
        let g = Gradients::zeros_like(&p);
        let before = p.clone();
        optimizer_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(p, before);
        let mut s2 = OptimizerState::adam(&p, 0.01);
        s2.m.biases[0][1] = 2.0;
        s2.v.biases[0][1] = 4.0;
        let mut q = p.clone();
        optimizer_step(&mut q, &g, &mut s2).unwrap();
        assert!((s2.m.biases[0][1] - 1.8).abs() < 1e-15);
        assert!((s2.v.biases[0][1] - 4.0 * 0.999).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = NetworkParams::random(&[5, 7, 3], Activation::ReLU, Head::Softmax, &mut rng);
        let text = p.to_json();
        let q = NetworkParams::from_json(&text).unwrap();
        assert_eq!(p, q);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["weights"][0].as_array().unwrap().len(), 7);
        assert_eq!(v["weights"][0][0].as_array().unwrap().len(), 5);
        assert_eq!(v["activation"], "ReLU");
    }

    #[test]
    fn malformed_checkpoint_rejected() {
        let text = r#"{"layer_dims":[2,2],"activation":"Tanh","head":"Linear","weights":[[[1.0]]],"biases":[[0.0,0.0]]}"#;
        assert!(NetworkParams::from_json(text).is_err());
    }
}
