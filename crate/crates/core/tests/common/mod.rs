#![allow(dead_code)]

use std::path::PathBuf;

use advrate::verifier::{Dnf, OutputAtom, Property};
use advrate::{Activation, InputBox, Interval, Layer, Network};
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn random_net<R: Rng>(rng: &mut R, input: usize, hidden: &[usize], output: usize, act: Activation) -> Network {
    let mut layers = Vec::new();
    let mut fan_in = input;
    let widths: Vec<usize> = hidden.iter().copied().chain([output]).collect();
    for (k, &w) in widths.iter().enumerate() {
        let a = if k + 1 == widths.len() { Activation::Linear } else { act };
        let scale = 1.0 / (fan_in as f64).sqrt();
        let weights = (0..w * fan_in).map(|_| rng.gen_range(-2.0 * scale..2.0 * scale)).collect();
        let bias = (0..w).map(|_| rng.gen_range(-0.5..0.5)).collect();
        layers.push(Layer::from_flat(weights, fan_in, bias, a).unwrap());
        fan_in = w;
    }
    Network::new(input, layers).unwrap()
}

pub fn random_box<R: Rng>(rng: &mut R, dims: usize, span: f64) -> InputBox {
    let bounds: Vec<(f64, f64)> = (0..dims)
        .map(|_| {
            let a = rng.gen_range(-span..span);
            let b = rng.gen_range(-span..span);
            (a.min(b), a.max(b) + 1e-3)
        })
        .collect();
    InputBox::from_bounds(&bounds).unwrap()
}

pub fn random_post<R: Rng>(rng: &mut R, outputs: usize) -> Dnf {
    if rng.gen_bool(0.5) {
        Dnf::atom(OutputAtom::Argmax(rng.gen_range(0..outputs)))
    } else {
        let c = (0..outputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Dnf::atom(OutputAtom::ge(c, rng.gen_range(-0.5..0.5)))
    }
}

pub fn property(pre: InputBox, post: Dnf) -> Property {
    Property::new("q", pre, post).unwrap()
}

fn act(a: Activation, x: f64) -> f64 {
    match a {
        Activation::Relu => x.max(0.0),
        Activation::LeakyRelu { slope } => {
            if x >= 0.0 {
                x
            } else {
                slope * x
            }
        }
        Activation::Tanh => x.tanh(),
        Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        Activation::Swish => x / (1.0 + (-x).exp()),
        Activation::Linear => x,
    }
}

/// Reference forward pass over the row-major weights.
pub fn naive_forward(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    for layer in net.layers() {
        v = (0..layer.out_dim())
            .map(|i| {
                let s: f64 = layer.row(i).iter().zip(&v).map(|(w, x)| w * x).sum();
                act(layer.activation(), s + layer.bias()[i])
            })
            .collect();
    }
    v
}

const SWISH_MIN_X: f64 = -1.278_464_542_761_074;

fn act_interval(a: Activation, l: f64, u: f64) -> (f64, f64) {
    match a {
        Activation::Swish => {
            let (gl, gu) = (act(a, l), act(a, u));
            let lo = if l <= SWISH_MIN_X && SWISH_MIN_X <= u {
                gl.min(gu).min(act(a, SWISH_MIN_X))
            } else {
                gl.min(gu)
            };
            (lo, gl.max(gu))
        }
        _ => (act(a, l), act(a, u)),
    }
}

/// Textbook interval arithmetic: each product bounded by its two endpoint
/// products, summed term by term.
pub fn naive_propagate(net: &Network, b: &InputBox) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = b.dims().iter().map(|i| (i.lo, i.hi)).collect();
    for layer in net.layers() {
        v = (0..layer.out_dim())
            .map(|i| {
                let (mut lo, mut hi) = (layer.bias()[i], layer.bias()[i]);
                for (w, &(l, u)) in layer.row(i).iter().zip(&v) {
                    let (p, q) = (w * l, w * u);
                    lo += p.min(q);
                    hi += p.max(q);
                }
                act_interval(layer.activation(), lo, hi)
            })
            .collect();
    }
    v
}

/// Fraction of uniform samples of `prop.pre` whose output satisfies `prop.post`.
pub fn monte_carlo<R: Rng>(net: &Network, prop: &Property, n: usize, rng: &mut R) -> f64 {
    let mut hits = 0usize;
    let mut x = Vec::new();
    for _ in 0..n {
        prop.pre.sample_into(rng, &mut x);
        if prop.post.holds(&naive_forward(net, &x)) {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

pub fn interval_contains(iv: &Interval, (lo, hi): (f64, f64), tol: f64) -> bool {
    iv.lo <= lo + tol && hi <= iv.hi + tol
}
