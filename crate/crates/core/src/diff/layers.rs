use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gaussian::{LOG_VAR_MAX, LOG_VAR_MIN};
use super::ops::Ops;
use super::params::{ParamId, ParamStore};
use super::real::Real;

/// Negative slope of every LeakyReLU in the model.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Affine map `x W + b` with `W: [in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let weight = store.add_uniform(format!("{name}.weight"), in_dim, out_dim, bound, rng);
        let bias = store.add_uniform(format!("{name}.bias"), 1, out_dim, bound, rng);
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward<F: Real, O: Ops<F>>(&self, ops: &mut O, x: &O::V) -> O::V {
        assert_eq!(
            ops.cols(x),
            self.in_dim,
            "linear layer expects {} input features",
            self.in_dim
        );
        let w = ops.param(self.weight);
        let b = ops.param(self.bias);
        let y = ops.matmul(x, &w);
        ops.add_row(&y, &b)
    }
}

/// Layer widths from input to output, and whether the last layer is
/// followed by a LeakyReLU as well.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub widths: Vec<usize>,
    pub final_activation: bool,
}

impl LayerSpec {
    pub fn new(widths: &[usize], final_activation: bool) -> Self {
        assert!(
            widths.len() >= 2,
            "a layer spec needs input and output widths"
        );
        Self {
            widths: widths.to_vec(),
            final_activation,
        }
    }
}

/// Stack of affine layers with LeakyReLU between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub final_activation: bool,
}

impl Mlp {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        spec: &LayerSpec,
        rng: &mut R,
    ) -> Self {
        let layers = spec
            .widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| Linear::new(store, &format!("{name}.{k}"), w[0], w[1], rng))
            .collect();
        Self {
            layers,
            final_activation: spec.final_activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn forward<F: Real, O: Ops<F>>(&self, ops: &mut O, x: &O::V) -> O::V {
        let slope = F::of(LEAKY_SLOPE);
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.forward(ops, &h);
            if k < last || self.final_activation {
                h = ops.leaky_relu(&h, slope);
            }
        }
        h
    }
}

/// Gated recurrent unit with fused gate weights, gate order (reset,
/// update, candidate):
///
/// ```text
/// r  = sigmoid(x Wr + br + h Ur + cr)
/// z  = sigmoid(x Wz + bz + h Uz + cz)
/// n  = tanh(x Wn + bn + r * (h Un + cn))
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone)]
pub struct GruCell {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub b_input: ParamId,
    pub b_hidden: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (hidden.max(1) as f64).sqrt();
        Self {
            w_input: store.add_uniform(format!("{name}.w_input"), input, 3 * hidden, bound, rng),
            w_hidden: store.add_uniform(format!("{name}.w_hidden"), hidden, 3 * hidden, bound, rng),
            b_input: store.add_uniform(format!("{name}.b_input"), 1, 3 * hidden, bound, rng),
            b_hidden: store.add_uniform(format!("{name}.b_hidden"), 1, 3 * hidden, bound, rng),
            input,
            hidden,
        }
    }

    pub fn step<F: Real, O: Ops<F>>(&self, ops: &mut O, x: &O::V, h: &O::V) -> O::V {
        assert_eq!(ops.cols(x), self.input, "GRU input width");
        assert_eq!(ops.cols(h), self.hidden, "GRU hidden width");
        let n = self.hidden;
        let wi = ops.param(self.w_input);
        let bi = ops.param(self.b_input);
        let wh = ops.param(self.w_hidden);
        let bh = ops.param(self.b_hidden);
        let gi = ops.matmul(x, &wi);
        let gi = ops.add_row(&gi, &bi);
        let gh = ops.matmul(h, &wh);
        let gh = ops.add_row(&gh, &bh);

        let ru_i = ops.slice(&gi, 0, 2 * n);
        let ru_h = ops.slice(&gh, 0, 2 * n);
        let ru = ops.add(&ru_i, &ru_h);
        let ru = ops.sigmoid(&ru);
        let reset = ops.slice(&ru, 0, n);
        let update = ops.slice(&ru, n, 2 * n);

        let cand_i = ops.slice(&gi, 2 * n, 3 * n);
        let cand_h = ops.slice(&gh, 2 * n, 3 * n);
        let gated = ops.mul(&reset, &cand_h);
        let cand = ops.add(&cand_i, &gated);
        let cand = ops.tanh(&cand);

        // n + z * (h - n)
        let diff = ops.sub(h, &cand);
        let keep = ops.mul(&update, &diff);
        ops.add(&cand, &keep)
    }
}

/// Network producing a diagonal Gaussian: the output layer has `2 * dim`
/// units, split into mean and log-variance. The log-variance is clamped to
/// `[LOG_VAR_MIN, LOG_VAR_MAX]`.
#[derive(Debug, Clone)]
pub struct GaussianHead {
    pub net: Mlp,
    pub dim: usize,
}

impl GaussianHead {
    pub fn new<F: Real, R: Rng + ?Sized>(
        store: &mut ParamStore<F>,
        name: &str,
        hidden: &[usize],
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut widths = hidden.to_vec();
        widths.push(2 * dim);
        Self {
            net: Mlp::new(store, name, &LayerSpec::new(&widths, false), rng),
            dim,
        }
    }

    pub fn forward<F: Real, O: Ops<F>>(&self, ops: &mut O, x: &O::V) -> (O::V, O::V) {
        let out = self.net.forward(ops, x);
        let mean = ops.slice(&out, 0, self.dim);
        let raw = ops.slice(&out, self.dim, 2 * self.dim);
        let log_var = ops.clamp(&raw, F::of(LOG_VAR_MIN), F::of(LOG_VAR_MAX));
        (mean, log_var)
    }
}
