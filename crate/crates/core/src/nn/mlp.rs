use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => super::sigmoid(z),
        }
    }

    /// Derivative at pre-activation `z` whose output is `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
        }
    }

    /// True when the derivative is locally constant (zero curvature a.e.).
    pub fn is_piecewise_linear(self) -> bool {
        matches!(
            self,
            Activation::Identity | Activation::Relu | Activation::LeakyRelu(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
            momentum: 0.99,
            eps: 1e-3,
        }
    }
}

/// Dense layer followed by activation, optional batch norm and dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `inputs x outputs`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    pub batch_norm: Option<BatchNorm>,
    pub dropout: f64,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    training: bool,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Array2<f64>,
    z: Array2<f64>,
    a: Array2<f64>,
    bn: Option<BnCache>,
    dropout_mask: Option<Array2<f64>>,
}

/// Intermediate values of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
}

impl ForwardCache {
    /// Pre-activations of layer `i`.
    pub fn pre_activation(&self, i: usize) -> &Array2<f64> {
        &self.layers[i].z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

/// Parameter gradients laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                    gamma: l.batch_norm.as_ref().map(|b| Array1::zeros(b.gamma.len())),
                    beta: l.batch_norm.as_ref().map(|b| Array1::zeros(b.beta.len())),
                })
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.scaled_add(scale, &b.weights);
            a.bias.scaled_add(scale, &b.bias);
            if let (Some(x), Some(y)) = (a.gamma.as_mut(), b.gamma.as_ref()) {
                x.scaled_add(scale, y);
            }
            if let (Some(x), Some(y)) = (a.beta.as_mut(), b.beta.as_ref()) {
                x.scaled_add(scale, y);
            }
        }
    }

    /// Flat views in the same order as [`Mlp::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for l in &self.layers {
            out.push(l.weights.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.push(g.as_slice().expect("standard layout"));
                out.push(b.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Feed-forward network of [`Layer`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Builder for [`Mlp`]s: widths include the input and output sizes.
#[derive(Debug, Clone)]
pub struct MlpBuilder {
    widths: Vec<usize>,
    hidden: Activation,
    output: Activation,
    batch_norm: bool,
    dropout: f64,
}

impl MlpBuilder {
    pub fn new(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        Self {
            widths: widths.to_vec(),
            hidden: Activation::Relu,
            output: Activation::Identity,
            batch_norm: false,
            dropout: 0.0,
        }
    }

    pub fn hidden_activation(mut self, act: Activation) -> Self {
        self.hidden = act;
        self
    }

    pub fn output_activation(mut self, act: Activation) -> Self {
        self.output = act;
        self
    }

    pub fn batch_norm(mut self, on: bool) -> Self {
        self.batch_norm = on;
        self
    }

    pub fn dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }

    /// Glorot-uniform weights, zero biases.
    pub fn build<R: Rng + ?Sized>(self, rng: &mut R) -> Mlp {
        let n = self.widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (self.widths[i], self.widths[i + 1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let weights = Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(rng));
                let last = i == n - 1;
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation: if last { self.output } else { self.hidden },
                    batch_norm: (!last && self.batch_norm).then(|| BatchNorm::new(fan_out)),
                    dropout: if last { 0.0 } else { self.dropout },
                }
            })
            .collect();
        Mlp { layers }
    }
}

impl Mlp {
    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty network").outputs()
    }

    /// Input width followed by every layer's output width.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(Layer::outputs));
        w
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| l.batch_norm.is_some())
    }

    /// Zero the final layer's weights and bias.
    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty network");
        last.weights.fill(0.0);
        last.bias.fill(0.0);
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for l in &mut self.layers {
            out.push(l.weights.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
            if let Some(bn) = l.batch_norm.as_mut() {
                out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.weights.len()
                    + l.bias.len()
                    + l.batch_norm.as_ref().map_or(0, |b| 2 * b.gamma.len())
            })
            .sum()
    }

    /// Inference-mode forward pass.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        for layer in &self.layers {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            z.mapv_inplace(|v| layer.activation.apply(v));
            if let Some(bn) = &layer.batch_norm {
                for (j, mut col) in z.axis_iter_mut(Axis(1)).enumerate() {
                    let inv = 1.0 / (bn.running_var[j] + bn.eps).sqrt();
                    let (m, g, b) = (bn.running_mean[j], bn.gamma[j], bn.beta[j]);
                    col.mapv_inplace(|v| g * (v - m) * inv + b);
                }
            }
            h = z;
        }
        h
    }

    /// Inference-mode forward pass that keeps what [`Mlp::backward`] needs.
    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, ForwardCache) {
        let mut h = x.to_owned();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = layer_forward(layer, h);
            caches.push(cache);
            h = out;
        }
        (h, ForwardCache { layers: caches })
    }

    /// Training-mode forward pass: batch statistics, dropout, and running
    /// statistic updates.
    pub fn forward_train<R: Rng + ?Sized>(
        &mut self,
        x: ArrayView2<f64>,
        rng: &mut R,
    ) -> (Array2<f64>, ForwardCache) {
        let mut h = x.to_owned();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let (out, cache) = layer_forward_train(layer, h, rng);
            caches.push(cache);
            h = out;
        }
        (h, ForwardCache { layers: caches })
    }

    /// Backpropagate `grad_out` (gradient of a scalar loss with respect to
    /// the network output). Returns parameter and input gradients.
    pub fn backward(&self, cache: &ForwardCache, grad_out: ArrayView2<f64>) -> (Gradients, Array2<f64>) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.to_owned();
        for (layer, lc) in self.layers.iter().zip(&cache.layers).rev() {
            if let Some(mask) = &lc.dropout_mask {
                g *= mask;
            }
            let (mut gamma_grad, mut beta_grad) = (None, None);
            if let (Some(bn), Some(bc)) = (&layer.batch_norm, &lc.bn) {
                gamma_grad = Some((&g * &bc.xhat).sum_axis(Axis(0)));
                beta_grad = Some(g.sum_axis(Axis(0)));
                let dxhat = &g * &bn.gamma;
                if bc.training {
                    let m = g.nrows() as f64;
                    let sum_d = dxhat.sum_axis(Axis(0));
                    let sum_dx = (&dxhat * &bc.xhat).sum_axis(Axis(0));
                    let mut da = dxhat * m;
                    da -= &sum_d;
                    da -= &(&bc.xhat * &sum_dx);
                    da *= &(&bc.inv_std / m);
                    g = da;
                } else {
                    g = dxhat * &bc.inv_std;
                }
            }
            let act = layer.activation;
            ndarray::Zip::from(&mut g)
                .and(&lc.z)
                .and(&lc.a)
                .for_each(|gv, &z, &a| *gv *= act.derivative(z, a));
            let wg = lc.input.t().dot(&g).as_standard_layout().into_owned();
            let bg = g.sum_axis(Axis(0));
            let input_grad = g.dot(&layer.weights.t());
            grads.push(LayerGrad {
                weights: wg,
                bias: bg,
                gamma: gamma_grad,
                beta: beta_grad,
            });
            g = input_grad;
        }
        grads.reverse();
        (Gradients { layers: grads }, g)
    }
}

fn layer_forward(layer: &Layer, input: Array2<f64>) -> (Array2<f64>, LayerCache) {
    let mut z = input.dot(&layer.weights);
    z += &layer.bias;
    let a = z.mapv(|v| layer.activation.apply(v));
    let (out, bn) = match &layer.batch_norm {
        Some(bn) => {
            let inv_std = bn.running_var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
            let xhat = (&a - &bn.running_mean) * &inv_std;
            let out = &xhat * &bn.gamma + &bn.beta;
            (
                out,
                Some(BnCache {
                    xhat,
                    inv_std,
                    training: false,
                }),
            )
        }
        None => (a.clone(), None),
    };
    (
        out,
        LayerCache {
            input,
            z,
            a,
            bn,
            dropout_mask: None,
        },
    )
}

fn layer_forward_train<R: Rng + ?Sized>(
    layer: &mut Layer,
    input: Array2<f64>,
    rng: &mut R,
) -> (Array2<f64>, LayerCache) {
    let mut z = input.dot(&layer.weights);
    z += &layer.bias;
    let a = z.mapv(|v| layer.activation.apply(v));
    let (mut out, bn) = match layer.batch_norm.as_mut() {
        Some(bn) if a.nrows() > 1 => {
            let mean = a.mean_axis(Axis(0)).expect("non-empty batch");
            let var = a.var_axis(Axis(0), 0.0);
            let inv_std = var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
            let xhat = (&a - &mean) * &inv_std;
            let out = &xhat * &bn.gamma + &bn.beta;
            let m = bn.momentum;
            bn.running_mean = &bn.running_mean * m + &mean * (1.0 - m);
            bn.running_var = &bn.running_var * m + &var * (1.0 - m);
            (
                out,
                Some(BnCache {
                    xhat,
                    inv_std,
                    training: true,
                }),
            )
        }
        Some(bn) => {
            // single-row batch: fall back to running statistics
            let inv_std = bn.running_var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
            let xhat = (&a - &bn.running_mean) * &inv_std;
            let out = &xhat * &bn.gamma + &bn.beta;
            (
                out,
                Some(BnCache {
                    xhat,
                    inv_std,
                    training: false,
                }),
            )
        }
        None => (a.clone(), None),
    };
    let dropout_mask = (layer.dropout > 0.0).then(|| {
        let keep = 1.0 - layer.dropout;
        let mask = Array2::from_shape_fn(out.raw_dim(), |_| {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        out *= &mask;
        mask
    });
    (
        out,
        LayerCache {
            input,
            z,
            a,
            bn,
            dropout_mask,
        },
    )
}
