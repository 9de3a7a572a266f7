//! Feed-forward networks and concrete evaluation.
//!
//! A [`Network`] is a chain of dense layers `a_l = g(W_l a_{l-1} + b_l)`. The
//! final layer is always linear: policies compare raw output scores, and the
//! verifier's output atoms stay linear in those scores.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input at which `x * sigmoid(x)` attains its single minimum.
pub const SWISH_ARGMIN: f64 = -1.278_464_542_761_074;
/// Value of swish at [`SWISH_ARGMIN`].
pub const SWISH_MIN: f64 = -0.278_464_542_761_073_85;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
    Sigmoid,
    Swish,
    Linear,
}

impl Activation {
    pub fn leaky(slope: f64) -> Result<Self> {
        let act = Activation::LeakyRelu { slope };
        act.validate()?;
        Ok(act)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::LeakyRelu { slope } if !(slope > 0.0 && slope < 1.0) => Err(
                Error::InvalidNetwork(format!("leaky_relu slope {slope} outside (0, 1)")),
            ),
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Swish => x * sigmoid(x),
            Activation::Linear => x,
        }
    }

    /// Derivative with respect to the pre-activation. ReLU-family kinks use
    /// the right derivative at zero.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::Linear => 1.0,
        }
    }

    /// Canonical lowercase name, as used in network files.
    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu { .. } => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Swish => "swish",
            Activation::Linear => "linear",
        }
    }

    /// Parses `relu`, `tanh`, `sigmoid`, `swish`, `linear`, `leaky_relu` (slope
    /// 0.01) or `leaky_relu:<slope>`.
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (name, slope) = match lower.split_once(':') {
            Some((n, v)) => {
                let slope = v
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidNetwork(format!("bad slope in `{s}`")))?;
                (n.to_string(), Some(slope))
            }
            None => (lower, None),
        };
        match (name.as_str(), slope) {
            ("relu", None) => Ok(Activation::Relu),
            ("tanh", None) => Ok(Activation::Tanh),
            ("sigmoid", None) => Ok(Activation::Sigmoid),
            ("swish", None) => Ok(Activation::Swish),
            ("linear", None) => Ok(Activation::Linear),
            ("leaky_relu" | "leaky" | "leakyrelu", slope) => Activation::leaky(slope.unwrap_or(0.01)),
            _ => Err(Error::InvalidNetwork(format!("unknown activation `{s}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::LeakyRelu { slope } => write!(f, "leaky_relu:{slope}"),
            other => f.write_str(other.name()),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Dense layer. Weights are stored row-major, `out_dim` rows of `in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weights: Vec<f64>,
    bias: Vec<f64>,
    in_dim: usize,
    activation: Activation,
}

impl Layer {
    pub fn new(rows: Vec<Vec<f64>>, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidNetwork("layer with no rows".into()));
        }
        let in_dim = rows[0].len();
        if in_dim == 0 {
            return Err(Error::InvalidNetwork("layer with zero-width rows".into()));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != in_dim) {
            return Err(Error::InvalidNetwork(format!(
                "ragged weight matrix: row {i} has {} columns, expected {in_dim}",
                rows[i].len()
            )));
        }
        let weights: Vec<f64> = rows.into_iter().flatten().collect();
        Self::from_flat(weights, in_dim, bias, activation)
    }

    pub fn from_flat(
        weights: Vec<f64>,
        in_dim: usize,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        activation.validate()?;
        if in_dim == 0 || weights.len() != in_dim * bias.len() || bias.is_empty() {
            return Err(Error::InvalidNetwork(format!(
                "weights ({} entries) do not form a {}x{in_dim} matrix",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidNetwork("non-finite parameter".into()));
        }
        Ok(Layer {
            weights,
            bias,
            in_dim,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.bias.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.in_dim..(i + 1) * self.in_dim]
    }

    pub fn rows_iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.weights.chunks_exact(self.in_dim)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.weights.chunks(self.in_dim).map(<[f64]>::to_vec).collect()
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.weights, &mut self.bias)
    }

    /// `W x + b`, written into `out`.
    #[inline]
    pub fn affine_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.in_dim)
                .zip(&self.bias)
                .map(|(row, b)| dot(row, x) + b),
        );
    }
}

/// Dot product with four independent accumulators so the loop vectorizes.
/// Every evaluation path uses this exact summation order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    lanes(a, b, |x| x)
}

/// `sum |a_i| * b_i` with the same lane structure as [`dot`].
#[inline]
pub(crate) fn abs_dot(a: &[f64], b: &[f64]) -> f64 {
    lanes(a, b, f64::abs)
}

#[inline(always)]
fn lanes(a: &[f64], b: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += f(x[k]) * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += f(*x) * y;
    }
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_dim: usize,
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidNetwork("input_dim must be positive".into()));
        }
        let Some(last) = layers.last() else {
            return Err(Error::InvalidNetwork("network has no layers".into()));
        };
        if last.activation != Activation::Linear {
            return Err(Error::InvalidNetwork(format!(
                "output layer must be linear, found {}",
                last.activation
            )));
        }
        let mut width = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim != width {
                return Err(Error::InvalidNetwork(format!(
                    "layer {i} expects {} inputs but receives {width}",
                    layer.in_dim
                )));
            }
            width = layer.out_dim();
        }
        Ok(Network { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Layer::out_dim).unwrap_or(0)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Widths of the hidden layers.
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(Layer::out_dim)
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_range(0..self.layers.len(), x)
    }

    /// Evaluates only `layers[range]`; `x` must match the first layer's width.
    pub fn forward_range(&self, range: Range<usize>, x: &[f64]) -> Result<Vec<f64>> {
        let expected = if range.start < self.layers.len() {
            self.layers[range.start].in_dim
        } else {
            self.output_dim()
        };
        if x.len() != expected {
            return Err(Error::InputShape {
                expected,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("input contains non-finite values".into()));
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for idx in range {
            let layer = &self.layers[idx];
            layer.affine_into(&cur, &mut next);
            for v in next.iter_mut() {
                *v = layer.activation.apply(*v);
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric { layer: idx });
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass without shape or finiteness checks, for hot loops whose
    /// inputs are already validated.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.affine_into(&cur, &mut next);
            for v in next.iter_mut() {
                *v = layer.activation.apply(*v);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax_action(y: &[f64]) -> Result<usize> {
    if y.is_empty() {
        return Err(Error::Contract("argmax of an empty vector".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Contract("argmax of a non-finite vector".into()));
    }
    Ok(argmax_unchecked(y))
}

#[inline]
pub(crate) fn argmax_unchecked(y: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in y.iter().enumerate().skip(1) {
        if *v > y[best] {
            best = i;
        }
    }
    best
}
