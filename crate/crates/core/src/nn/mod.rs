//! A small dense-network toolkit: forward pass with an activation tape,
//! exact backpropagation, plain SGD and the relative-error loss.
//!
//! Weights are stored row-major, `weights[o * inputs + i]`.

mod checkpoint;
mod loss;

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{read_network, write_network};
pub use loss::{log_ratio_loss, relative_error_loss};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Sigmoid,
    Relu,
    Tanh,
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Identity,
        Activation::Sigmoid,
        Activation::Relu,
        Activation::Tanh,
    ];

    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Sigmoid => 1,
            Activation::Relu => 2,
            Activation::Tanh => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::Contract("layer dimensions must be positive".into()));
        }
        if weights.len() != inputs * outputs {
            return Err(Error::Shape {
                expected: inputs * outputs,
                actual: weights.len(),
                context: "layer weights",
            });
        }
        if bias.len() != outputs {
            return Err(Error::Shape {
                expected: outputs,
                actual: bias.len(),
                context: "layer bias",
            });
        }
        if weights.iter().chain(&bias).any(|p| !p.is_finite()) {
            return Err(Error::Numeric("layer parameters"));
        }
        Ok(Self {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Result<Self> {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self::new(inputs, outputs, weights, vec![0.0; outputs], activation)
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.bias.iter().enumerate().map(|(o, b)| {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z = b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
            self.activation.apply(z)
        }));
    }
}

/// A feed-forward network. Every parameter mutation assigns a fresh identity
/// so tapes recorded against older parameters are rejected by `backward`.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    id: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by [`Network::forward`]; `values[0]` is the input and
/// `values[k + 1]` the output of layer `k`.
#[derive(Debug, Clone)]
pub struct Tape {
    net_id: u64,
    values: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("tape holds the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Partial derivatives for every parameter of a [`Network`], same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<LayerGradient>,
}

impl Gradient {
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.flat().all(|g| g.is_finite())
    }

    /// Entries in the same order as [`Network::params`].
    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }
}

impl Network {
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Contract("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape {
                    expected: pair[0].outputs,
                    actual: pair[1].inputs,
                    context: "adjacent layer dimensions",
                });
            }
        }
        Ok(Self { layers, id: fresh_id() })
    }

    /// A randomly initialised MLP with layer widths `dims` (input first).
    /// Hidden layers use `hidden`; the last layer uses `output`.
    pub fn mlp<R: Rng + ?Sized>(dims: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Contract("an MLP needs input and output widths".into()));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(k, w)| Layer::glorot(w[0], w[1], if k == last { output } else { hidden }, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights before bias.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape {
                expected: self.param_count(),
                actual: params.len(),
                context: "parameter vector",
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("parameters"));
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            l.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        self.id = fresh_id();
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                actual: x.len(),
                context: "network input",
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("network input"));
        }
        Ok(())
    }

    /// Output only; no tape.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            l.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
        self.check_input(x)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        for l in &self.layers {
            let mut out = Vec::with_capacity(l.outputs);
            l.forward_into(values.last().unwrap(), &mut out);
            values.push(out);
        }
        let y = values.last().unwrap().clone();
        Ok((
            y,
            Tape {
                net_id: self.id,
                values,
            },
        ))
    }

    /// Backpropagates `dl_dy` through the recorded tape. Returns the
    /// parameter gradient and the gradient with respect to the input.
    pub fn backward(&self, tape: &Tape, dl_dy: &[f64]) -> Result<(Gradient, Vec<f64>)> {
        if tape.net_id != self.id || tape.values.len() != self.layers.len() + 1 {
            return Err(Error::Contract("tape was recorded against different parameters".into()));
        }
        if dl_dy.len() != self.output_dim() {
            return Err(Error::Shape {
                expected: self.output_dim(),
                actual: dl_dy.len(),
                context: "output gradient",
            });
        }
        let mut grad = Gradient::zeros_like(self);
        let mut upstream = dl_dy.to_vec();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let x = &tape.values[k];
            let y = &tape.values[k + 1];
            let delta: Vec<f64> = upstream
                .iter()
                .zip(y)
                .map(|(g, &yo)| g * l.activation.derivative_from_output(yo))
                .collect();
            let lg = &mut grad.layers[k];
            let mut down = vec![0.0; l.inputs];
            for (o, &d) in delta.iter().enumerate() {
                lg.bias[o] = d;
                let row = o * l.inputs;
                for i in 0..l.inputs {
                    lg.weights[row + i] = d * x[i];
                    down[i] += d * l.weights[row + i];
                }
            }
            upstream = down;
        }
        Ok((grad, upstream))
    }

    /// In-place `p -= lr * g`. A non-finite gradient rejects the step and
    /// leaves the network untouched.
    pub fn apply_sgd(&mut self, grad: &Gradient, lr: f64) -> Result<()> {
        if grad.layers.len() != self.layers.len() {
            return Err(Error::Shape {
                expected: self.layers.len(),
                actual: grad.layers.len(),
                context: "gradient layers",
            });
        }
        for (l, g) in self.layers.iter().zip(&grad.layers) {
            if g.weights.len() != l.weights.len() || g.bias.len() != l.bias.len() {
                return Err(Error::Shape {
                    expected: l.weights.len() + l.bias.len(),
                    actual: g.weights.len() + g.bias.len(),
                    context: "gradient layer",
                });
            }
        }
        if !grad.is_finite() || !lr.is_finite() {
            return Err(Error::Numeric("gradient step"));
        }
        for (l, g) in self.layers.iter_mut().zip(&grad.layers) {
            l.weights.iter_mut().zip(&g.weights).for_each(|(p, d)| *p -= lr * d);
            l.bias.iter_mut().zip(&g.bias).for_each(|(p, d)| *p -= lr * d);
        }
        self.id = fresh_id();
        Ok(())
    }
}

pub fn forward(net: &Network, x: &[f64]) -> Result<(Vec<f64>, Tape)> {
    net.forward(x)
}

pub fn backward(net: &Network, tape: &Tape, dl_dy: &[f64]) -> Result<Gradient> {
    net.backward(tape, dl_dy).map(|(g, _)| g)
}

/// Returns a copy of `net` with every parameter moved by `-lr * grad`.
pub fn sgd_step(net: &Network, grad: &Gradient, lr: f64) -> Result<Network> {
    let mut next = net.clone();
    next.apply_sgd(grad, lr)?;
    Ok(next)
}
