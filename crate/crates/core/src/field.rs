//! The radiance field: positional encoding and a small MLP mapping a point and
//! a viewing direction to a density and a color, with an exact reverse pass.
//!
//! Layer order (also the checkpoint order):
//!
//! ```text
//! trunk[0..depth]   enc(x) -> width -> ... -> width        ReLU
//! sigma_feature     width -> 1 + width                     column 0 is the density pre-activation
//! head_hidden       [feature, enc(d)] -> head_width        ReLU
//! head_out          head_width -> 3                        sigmoid
//! ```
//!
//! Density goes through a softplus so that it is smooth everywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{dense, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub l_pos: usize,
    pub l_dir: usize,
    pub trunk_depth: usize,
    pub trunk_width: usize,
    pub head_width: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { l_pos: 10, l_dir: 4, trunk_depth: 4, trunk_width: 128, head_width: 64 }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trunk_depth == 0 || self.trunk_width == 0 || self.head_width == 0 {
            return Err(Error::invalid(format!("field layers must be non-empty: {self:?}")));
        }
        if self.l_pos > 30 || self.l_dir > 30 {
            return Err(Error::invalid("encoding order above 30 is not supported"));
        }
        Ok(())
    }

    pub fn pos_dim(&self) -> usize {
        encoded_len(self.l_pos)
    }

    pub fn dir_dim(&self) -> usize {
        encoded_len(self.l_dir)
    }

    /// `(inputs, outputs)` of every dense layer in declared order.
    pub fn layer_sizes(&self) -> Vec<(usize, usize)> {
        let w = self.trunk_width;
        let mut sizes = vec![(self.pos_dim(), w)];
        sizes.extend(std::iter::repeat((w, w)).take(self.trunk_depth - 1));
        sizes.push((w, 1 + w));
        sizes.push((w + self.dir_dim(), self.head_width));
        sizes.push((self.head_width, 3));
        sizes
    }

    /// Inverse of [`FieldConfig::layer_sizes`], used when reading checkpoints.
    pub fn from_layer_sizes(sizes: &[(usize, usize)], l_pos: usize, l_dir: usize) -> Result<Self> {
        if sizes.len() < 4 {
            return Err(Error::invalid("a field needs at least four layers"));
        }
        let depth = sizes.len() - 3;
        let cfg = Self {
            l_pos,
            l_dir,
            trunk_depth: depth,
            trunk_width: sizes[0].1,
            head_width: sizes[depth + 1].1,
        };
        cfg.validate()?;
        if cfg.layer_sizes() != sizes {
            return Err(Error::invalid(format!("layer sizes {sizes:?} do not describe a field")));
        }
        Ok(cfg)
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes().iter().map(|(i, o)| i * o + o).sum()
    }
}

pub fn encoded_len(order: usize) -> usize {
    3 + 6 * order
}

/// `[v, sin(2^k π v), cos(2^k π v)]` for `k = 0..order`, sines and cosines per
/// component. Higher octaves come from the double-angle identities, which
/// keeps full `f64` precision for the orders used here.
pub fn positional_encoding(v: [f64; 3], order: usize) -> Vec<f64> {
    let mut out = vec![0.0; encoded_len(order)];
    encode_into(v, order, &mut out);
    out
}

fn encode_into<T: Real>(v: [f64; 3], order: usize, out: &mut [T]) {
    for c in 0..3 {
        out[c] = T::of(v[c]);
        if order == 0 {
            continue;
        }
        let (mut s, mut co) = (std::f64::consts::PI * v[c]).sin_cos();
        for k in 0..order {
            out[3 + 6 * k + c] = T::of(s);
            out[3 + 6 * k + 3 + c] = T::of(co);
            (s, co) = (2.0 * s * co, (co - s) * (co + s));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl Layer {
    fn weights<'a, T>(&self, data: &'a [T]) -> &'a [T] {
        &data[self.offset..self.offset + self.inputs * self.outputs]
    }

    fn bias<'a, T>(&self, data: &'a [T]) -> &'a [T] {
        let start = self.offset + self.inputs * self.outputs;
        &data[start..start + self.outputs]
    }

    fn split_mut<'a, T>(&self, data: &'a mut [T]) -> (&'a mut [T], &'a mut [T]) {
        let block = &mut data[self.offset..self.offset + self.inputs * self.outputs + self.outputs];
        block.split_at_mut(self.inputs * self.outputs)
    }
}

fn layout(cfg: &FieldConfig) -> Vec<Layer> {
    let mut offset = 0;
    cfg.layer_sizes()
        .into_iter()
        .map(|(inputs, outputs)| {
            let l = Layer { inputs, outputs, offset };
            offset += inputs * outputs + outputs;
            l
        })
        .collect()
}

/// Weights and biases of every layer, stored contiguously in declared order
/// (each layer: row-major `inputs × outputs` weights, then `outputs` biases).
/// Gradients and optimizer moments use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldParams<T> {
    config: FieldConfig,
    layers: Vec<Layer>,
    pub data: Vec<T>,
}

impl<T: Real> FieldParams<T> {
    pub fn zeros(config: FieldConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, layers: layout(&config), data: vec![T::zero(); config.n_params()] })
    }

    /// He-style uniform initialization, `U(-√(6/fan_in), √(6/fan_in))`, zero biases.
    pub fn init(config: FieldConfig, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in p.layers.clone() {
            let bound = (6.0 / layer.inputs as f64).sqrt();
            let (w, _) = layer.split_mut(&mut p.data);
            for v in w.iter_mut() {
                *v = T::of(rng.random_range(-bound..bound));
            }
        }
        Ok(p)
    }

    pub fn from_data(config: FieldConfig, data: Vec<T>) -> Result<Self> {
        config.validate()?;
        if data.len() != config.n_params() {
            return Err(Error::invalid(format!(
                "field needs {} parameters, got {}",
                config.n_params(),
                data.len()
            )));
        }
        Ok(Self { config, layers: layout(&config), data })
    }

    pub fn zeros_like(&self) -> Self {
        Self { config: self.config, layers: self.layers.clone(), data: vec![T::zero(); self.data.len()] }
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.config == other.config && self.data.len() == other.data.len()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    /// Converts to another precision.
    pub fn cast<U: Real>(&self) -> FieldParams<U> {
        FieldParams {
            config: self.config,
            layers: self.layers.clone(),
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
        }
    }
}

/// Density and color at one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldOutput<T> {
    pub sigma: T,
    pub rgb: [T; 3],
}

fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Intermediate values of a batched forward pass needed by [`backward`].
#[derive(Debug, Clone)]
pub struct FieldTape<T> {
    n: usize,
    /// Input of every layer, row-major `n × inputs`.
    inputs: Vec<Vec<T>>,
    sigma_pre: Vec<T>,
    head_hidden: Vec<T>,
    rgb: Vec<T>,
}

impl<T: Real> FieldTape<T> {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

fn dense_forward<T: Real>(layer: &Layer, params: &[T], x: &[T], n: usize, relu: bool) -> Vec<T> {
    let bias = layer.bias(params);
    let mut y = vec![T::zero(); n * layer.outputs];
    for row in y.chunks_exact_mut(layer.outputs) {
        row.copy_from_slice(bias);
    }
    dense::mul(x, layer.weights(params), &mut y, n, layer.inputs, layer.outputs, T::one());
    if relu {
        for v in &mut y {
            *v = v.max(T::zero());
        }
    }
    y
}

/// Evaluates the field on a batch of positions and unit directions.
pub fn forward<T: Real>(params: &FieldParams<T>, xs: &[[f64; 3]], ds: &[[f64; 3]]) -> Result<(Vec<FieldOutput<T>>, FieldTape<T>)> {
    if xs.len() != ds.len() {
        return Err(Error::invalid(format!("{} positions but {} directions", xs.len(), ds.len())));
    }
    if xs.iter().chain(ds).flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite field input"));
    }
    let cfg = params.config;
    let n = xs.len();
    let (pd, dd, w, depth) = (cfg.pos_dim(), cfg.dir_dim(), cfg.trunk_width, cfg.trunk_depth);
    let layers = &params.layers;
    let data = &params.data;

    let mut x0 = vec![T::zero(); n * pd];
    for (row, x) in x0.chunks_exact_mut(pd).zip(xs) {
        encode_into(*x, cfg.l_pos, row);
    }
    let mut inputs = Vec::with_capacity(layers.len());
    let mut h = x0;
    for layer in &layers[..depth] {
        let next = dense_forward(layer, data, &h, n, true);
        inputs.push(std::mem::replace(&mut h, next));
    }
    let s = dense_forward(&layers[depth], data, &h, n, false);
    inputs.push(h);

    let mut head_in = vec![T::zero(); n * (w + dd)];
    let mut sigma_pre = Vec::with_capacity(n);
    let mut d_enc = vec![T::zero(); dd];
    let mut last_d = None;
    for ((row, srow), d) in head_in.chunks_exact_mut(w + dd).zip(s.chunks_exact(1 + w)).zip(ds) {
        sigma_pre.push(srow[0]);
        row[..w].copy_from_slice(&srow[1..]);
        // samples of one ray share their direction
        if last_d != Some(*d) {
            encode_into(*d, cfg.l_dir, &mut d_enc);
            last_d = Some(*d);
        }
        row[w..].copy_from_slice(&d_enc);
    }
    let g = dense_forward(&layers[depth + 1], data, &head_in, n, true);
    inputs.push(head_in);
    let mut rgb = dense_forward(&layers[depth + 2], data, &g, n, false);
    for v in &mut rgb {
        *v = sigmoid(*v);
    }
    let outputs = sigma_pre
        .iter()
        .zip(rgb.chunks_exact(3))
        .map(|(&s, c)| FieldOutput { sigma: softplus(s), rgb: [c[0], c[1], c[2]] })
        .collect();
    Ok((outputs, FieldTape { n, inputs, sigma_pre, head_hidden: g, rgb }))
}

/// Accumulates `∂L/∂θ` into `grads` given `∂L/∂σ` and `∂L/∂rgb` per sample.
pub fn backward<T: Real>(
    params: &FieldParams<T>,
    tape: &FieldTape<T>,
    d_sigma: &[T],
    d_rgb: &[[T; 3]],
    grads: &mut FieldParams<T>,
) -> Result<()> {
    let n = tape.n;
    if d_sigma.len() != n || d_rgb.len() != n {
        return Err(Error::invalid(format!(
            "upstream gradients for {} / {} samples, forward batch had {n}",
            d_sigma.len(),
            d_rgb.len()
        )));
    }
    if !params.same_shape(grads) {
        return Err(Error::invalid("gradient buffer does not match parameter shape"));
    }
    let cfg = params.config;
    let (dd, w, depth) = (cfg.dir_dim(), cfg.trunk_width, cfg.trunk_depth);
    let layers = &params.layers;
    let data = &params.data;

    // head_out
    let mut d_out: Vec<T> = Vec::with_capacity(n * 3);
    for (g, c) in d_rgb.iter().zip(tape.rgb.chunks_exact(3)) {
        for k in 0..3 {
            d_out.push(g[k] * c[k] * (T::one() - c[k]));
        }
    }
    let mut d_g = dense_backward(&layers[depth + 2], data, &tape.head_hidden, &d_out, n, grads);
    relu_backward(&mut d_g, &tape.head_hidden);

    // head_hidden
    let d_head_in = dense_backward(&layers[depth + 1], data, &tape.inputs[depth + 1], &d_g, n, grads);
    let mut d_s = Vec::with_capacity(n * (1 + w));
    for ((row, &pre), &ds) in d_head_in.chunks_exact(w + dd).zip(&tape.sigma_pre).zip(d_sigma) {
        d_s.push(ds * sigmoid(pre));
        d_s.extend_from_slice(&row[..w]);
    }

    // sigma_feature and trunk
    let mut d_h = dense_backward(&layers[depth], data, &tape.inputs[depth], &d_s, n, grads);
    for l in (0..depth).rev() {
        // input of layer l + 1 is the ReLU output of layer l
        relu_backward(&mut d_h, &tape.inputs[l + 1]);
        if l == 0 {
            dense_backward_params(&layers[0], &tape.inputs[0], &d_h, n, grads);
        } else {
            d_h = dense_backward(&layers[l], data, &tape.inputs[l], &d_h, n, grads);
        }
    }
    Ok(())
}

fn relu_backward<T: Real>(grad: &mut [T], post: &[T]) {
    for (g, &p) in grad.iter_mut().zip(post) {
        if p <= T::zero() {
            *g = T::zero();
        }
    }
}

fn dense_backward_params<T: Real>(layer: &Layer, x: &[T], dy: &[T], n: usize, grads: &mut FieldParams<T>) {
    let (gw, gb) = layer.split_mut(&mut grads.data);
    dense::mul_at_b_acc(x, dy, gw, n, layer.inputs, layer.outputs);
    for row in dy.chunks_exact(layer.outputs) {
        for (b, &g) in gb.iter_mut().zip(row) {
            *b = *b + g;
        }
    }
}

fn dense_backward<T: Real>(layer: &Layer, params: &[T], x: &[T], dy: &[T], n: usize, grads: &mut FieldParams<T>) -> Vec<T> {
    dense_backward_params(layer, x, dy, n, grads);
    let mut dx = vec![T::zero(); n * layer.inputs];
    dense::mul_a_bt(dy, layer.weights(params), &mut dx, n, layer.outputs, layer.inputs);
    dx
}

/// Single-sample evaluation.
pub fn field_eval<T: Real>(params: &FieldParams<T>, x: [f64; 3], d: [f64; 3]) -> Result<FieldOutput<T>> {
    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if !((norm - 1.0).abs() <= 1e-6) {
        return Err(Error::invalid(format!("view direction must be unit length, got norm {norm}")));
    }
    let (out, _) = forward(params, &[x], &[d])?;
    Ok(out[0])
}

/// Parameter gradient of `Σ_i (d_sigma_i·σ_i + d_rgb_i·rgb_i)` over a batch.
pub fn field_backward<T: Real>(
    params: &FieldParams<T>,
    xs: &[[f64; 3]],
    ds: &[[f64; 3]],
    d_sigma: &[T],
    d_rgb: &[[T; 3]],
) -> Result<FieldParams<T>> {
    let (_, tape) = forward(params, xs, ds)?;
    let mut grads = params.zeros_like();
    backward(params, &tape, d_sigma, d_rgb, &mut grads)?;
    Ok(grads)
}
