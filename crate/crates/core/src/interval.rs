//! Interval bound propagation over axis-aligned input boxes.
//!
//! Affine layers use sign-split interval arithmetic; activations map bounds
//! through their monotone pieces. Arithmetic is plain `f64` without outward
//! rounding, so soundness holds up to ulp-scale error.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{abs_dot, dot, Activation, Layer, Network, SWISH_ARGMIN, SWISH_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 2]", try_from = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Contract(format!("unbounded interval [{lo}, {hi}]")));
        }
        if lo > hi {
            return Err(Error::Contract(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;

    fn try_from([lo, hi]: [f64; 2]) -> Result<Self> {
        Interval::new(lo, hi)
    }
}

/// Axis-aligned hyperrectangle with one closed interval per input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Interval>", try_from = "Vec<Interval>")]
pub struct InputBox {
    dims: Vec<Interval>,
}

impl From<InputBox> for Vec<Interval> {
    fn from(b: InputBox) -> Self {
        b.dims
    }
}

impl TryFrom<Vec<Interval>> for InputBox {
    type Error = Error;

    fn try_from(dims: Vec<Interval>) -> Result<Self> {
        InputBox::new(dims)
    }
}

impl InputBox {
    pub fn new(dims: Vec<Interval>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Contract("box with zero dimensions".into()));
        }
        for d in &dims {
            Interval::new(d.lo, d.hi)?;
        }
        Ok(InputBox { dims })
    }

    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        let dims = bounds
            .iter()
            .map(|&(lo, hi)| Interval::new(lo, hi))
            .collect::<Result<Vec<_>>>()?;
        Self::new(dims)
    }

    pub fn point(x: &[f64]) -> Self {
        InputBox {
            dims: x.iter().copied().map(Interval::point).collect(),
        }
    }

    pub fn dims(&self) -> &[Interval] {
        &self.dims
    }

    pub fn dim_count(&self) -> usize {
        self.dims.len()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.lo).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.hi).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.dims.iter().map(Interval::mid).collect()
    }

    /// Product of all widths; zero when any dimension is a point.
    pub fn volume(&self) -> f64 {
        self.dims.iter().map(Interval::width).product()
    }

    /// Indices of dimensions with positive width.
    pub fn free_dims(&self) -> Vec<usize> {
        (0..self.dims.len())
            .filter(|&i| !self.dims[i].is_point())
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims.len() && self.dims.iter().zip(x).all(|(d, v)| d.contains(*v))
    }

    pub fn is_subset_of(&self, other: &InputBox) -> bool {
        self.dims.len() == other.dims.len()
            && self.dims.iter().zip(&other.dims).all(|(a, b)| a.is_subset_of(b))
    }

    /// Halves the box at the midpoint of dimension `dim`.
    pub fn bisect(&self, dim: usize) -> (InputBox, InputBox) {
        let d = self.dims[dim];
        let m = d.mid();
        let mut left = self.clone();
        let mut right = self.clone();
        left.dims[dim].hi = m;
        right.dims[dim].lo = m;
        (left, right)
    }

    /// Replaces dimension `dim` with `interval`.
    pub fn with_dim(&self, dim: usize, interval: Interval) -> InputBox {
        let mut b = self.clone();
        b.dims[dim] = interval;
        b
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dims.len());
        self.sample_into(rng, &mut out);
        out
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.dims.iter().map(|d| {
            if d.is_point() {
                d.lo
            } else {
                d.lo + (d.hi - d.lo) * rng.gen::<f64>()
            }
        }));
    }
}

/// Sound image of `[lo, hi]` under an activation.
#[inline]
pub fn activation_bounds(act: Activation, lo: f64, hi: f64) -> (f64, f64) {
    match act {
        Activation::Swish => {
            let gl = act.apply(lo);
            let gu = act.apply(hi);
            let mut min = gl.min(gu);
            if lo <= SWISH_ARGMIN && SWISH_ARGMIN <= hi {
                min = min.min(SWISH_MIN);
            }
            (min, gl.max(gu))
        }
        _ => (act.apply(lo), act.apply(hi)),
    }
}

/// Sign-split affine bounds: positive weights pair lower with lower, negative
/// weights pair lower with upper.
#[inline]
pub(crate) fn affine_bounds(row: &[f64], bias: f64, lo: &[f64], hi: &[f64]) -> (f64, f64) {
    let mut l = 0.0;
    let mut u = 0.0;
    for ((&w, &a), &b) in row.iter().zip(lo).zip(hi) {
        if w >= 0.0 {
            l += w * a;
            u += w * b;
        } else {
            l += w * b;
            u += w * a;
        }
    }
    (l + bias, u + bias)
}

/// Midpoint-radius form of sign-split bounds: `W m + b` plus or minus
/// `|W| r`. A point box has zero radius and reproduces the forward pass.
fn layer_bounds(layer: &Layer, lo: &[f64], hi: &[f64], buf: &mut AffineBuf) {
    buf.mid.clear();
    buf.rad.clear();
    for (&l, &h) in lo.iter().zip(hi) {
        buf.mid.push(0.5 * (l + h));
        buf.rad.push(0.5 * (h - l));
    }
    buf.pre.clear();
    let AffineBuf { mid, rad, pre } = buf;
    pre.extend(layer.rows_iter().zip(layer.bias()).map(|(row, b)| {
        let c = dot(row, mid) + b;
        let r = abs_dot(row, rad);
        (c - r, c + r)
    }));
}

#[derive(Debug, Default, Clone)]
struct AffineBuf {
    mid: Vec<f64>,
    rad: Vec<f64>,
    pre: Vec<(f64, f64)>,
}

/// Bounds for one layer: before and after its activation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBounds {
    pub pre_activation: Vec<Interval>,
    pub post_activation: Vec<Interval>,
}

fn check_dims(net: &Network, b: &InputBox) -> Result<()> {
    if b.dim_count() != net.input_dim() {
        return Err(Error::InputShape {
            expected: net.input_dim(),
            got: b.dim_count(),
        });
    }
    Ok(())
}

/// Per-layer bounds for every layer, first to last.
pub fn propagate_layers(net: &Network, b: &InputBox) -> Result<Vec<LayerBounds>> {
    check_dims(net, b)?;
    let mut lo = b.lower();
    let mut hi = b.upper();
    let mut buf = AffineBuf::default();
    let mut out = Vec::with_capacity(net.layers().len());
    for layer in net.layers() {
        layer_bounds(layer, &lo, &hi, &mut buf);
        let pre = &buf.pre;
        let act = layer.activation();
        lo.clear();
        hi.clear();
        for &(l, u) in pre {
            let (gl, gu) = activation_bounds(act, l, u);
            lo.push(gl);
            hi.push(gu);
        }
        out.push(LayerBounds {
            pre_activation: pre.iter().map(|&(l, u)| Interval { lo: l, hi: u }).collect(),
            post_activation: lo
                .iter()
                .zip(&hi)
                .map(|(&l, &u)| Interval { lo: l, hi: u })
                .collect(),
        });
    }
    Ok(out)
}

/// Sound output bounds: every `forward(net, x)` with `x` in the box lies in
/// the returned intervals.
pub fn propagate(net: &Network, b: &InputBox) -> Result<Vec<Interval>> {
    check_dims(net, b)?;
    let mut scratch = Scratch::default();
    let (lo, hi) = scratch.through(net.layers(), &b.lower(), &b.upper());
    Ok(lo
        .iter()
        .zip(hi)
        .map(|(&l, &u)| Interval { lo: l, hi: u })
        .collect())
}

/// Sound bounds on `c . y - b` over the box, where `y = forward(net, x)`.
///
/// The functional is folded into the final linear layer before propagating,
/// so correlations between outputs survive.
pub fn propagate_functional(net: &Network, bx: &InputBox, c: &[f64], b: f64) -> Result<Interval> {
    check_dims(net, bx)?;
    let form = LinearForm::fold(net, c, b)?;
    let mut scratch = Scratch::default();
    let (lo, hi) = scratch.hidden(net, &bx.lower(), &bx.upper());
    let (l, u) = form.bounds(lo, hi);
    Ok(Interval { lo: l, hi: u })
}

/// A single row `row . h + offset` over the input of the final layer.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LinearForm {
    pub row: Vec<f64>,
    pub offset: f64,
}

impl LinearForm {
    /// Folds `c . y - b` through the output layer of `net`.
    pub fn fold(net: &Network, c: &[f64], b: f64) -> Result<Self> {
        let last = net.layers().last().expect("network has layers");
        if c.len() != last.out_dim() {
            return Err(Error::InputShape {
                expected: last.out_dim(),
                got: c.len(),
            });
        }
        let mut row = vec![0.0; last.in_dim()];
        for (j, &cj) in c.iter().enumerate() {
            if cj == 0.0 {
                continue;
            }
            for (r, w) in row.iter_mut().zip(last.row(j)) {
                *r += cj * w;
            }
        }
        let offset = dot(c, last.bias()) - b;
        Ok(LinearForm { row, offset })
    }

    #[inline]
    pub fn bounds(&self, lo: &[f64], hi: &[f64]) -> (f64, f64) {
        affine_bounds(&self.row, self.offset, lo, hi)
    }
}

/// Reusable buffers for repeated propagation.
#[derive(Debug, Default, Clone)]
pub(crate) struct Scratch {
    lo: Vec<f64>,
    hi: Vec<f64>,
    buf: AffineBuf,
}

impl Scratch {
    /// Propagates through `layers`, returning the post-activation bounds.
    pub fn through(&mut self, layers: &[Layer], lo: &[f64], hi: &[f64]) -> (&[f64], &[f64]) {
        self.lo.clear();
        self.lo.extend_from_slice(lo);
        self.hi.clear();
        self.hi.extend_from_slice(hi);
        for layer in layers {
            layer_bounds(layer, &self.lo, &self.hi, &mut self.buf);
            let act = layer.activation();
            self.lo.clear();
            self.hi.clear();
            for &(l, u) in &self.buf.pre {
                let (gl, gu) = activation_bounds(act, l, u);
                self.lo.push(gl);
                self.hi.push(gu);
            }
        }
        (&self.lo, &self.hi)
    }

    /// Bounds on the input of the final (linear) layer.
    pub fn hidden(&mut self, net: &Network, lo: &[f64], hi: &[f64]) -> (&[f64], &[f64]) {
        let layers = net.layers();
        self.through(&layers[..layers.len() - 1], lo, hi)
    }
}
