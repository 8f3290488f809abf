//! Differentiable building blocks: linear layers, layer normalization, tanh
//! activation and the small multilayer perceptron used by the encoder and
//! feed-forward sublayers.
//!
//! Every block exposes an explicit backward pass that accumulates parameter
//! gradients into a same-shaped structure, keeping the whole model free of
//! hidden autodiff state and bit-reproducible.

use ndarray::{Array1, Array2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha8Rng;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Fully connected layer `y = x W^T + b` with `w` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    /// Xavier-uniform weights, zero bias.
    pub fn xavier(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let w = Array2::from_shape_fn((out_dim, in_dim), |_| dist.sample(rng));
        Linear { w, b: Array1::zeros(out_dim) }
    }

    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Linear { w: Array2::zeros((out_dim, in_dim)), b: Array1::zeros(out_dim) }
    }

    pub fn out_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn in_dim(&self) -> usize {
        self.w.ncols()
    }

    /// `x` is `(batch, in)`; returns `(batch, out)`.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    /// Accumulates `dW`, `db` into `grads` and returns `dx`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grads: &mut Linear) -> Array2<f64> {
        grads.w = &grads.w + &dy.t().dot(x);
        grads.b = &grads.b + &dy.sum_axis(Axis(0));
        dy.dot(&self.w)
    }
}

/// Per-row layer normalization with learned gain and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// Forward intermediates needed by the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl LayerNorm {
    pub fn identity(dim: usize) -> Self {
        LayerNorm { gamma: Array1::ones(dim), beta: Array1::zeros(dim) }
    }

    pub fn zeros(dim: usize) -> Self {
        LayerNorm { gamma: Array1::zeros(dim), beta: Array1::zeros(dim) }
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LayerNormCache) {
        let dim = x.ncols() as f64;
        let mut xhat = x.clone();
        let mut inv_std = Array1::zeros(x.nrows());
        for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
            let mean = row.sum() / dim;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / dim;
            *inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.mapv_inplace(|v| v * *inv);
        }
        let y = &xhat * &self.gamma + &self.beta;
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(
        &self,
        cache: &LayerNormCache,
        dy: &Array2<f64>,
        grads: &mut LayerNorm,
    ) -> Array2<f64> {
        let dim = dy.ncols() as f64;
        grads.gamma = &grads.gamma + &(dy * &cache.xhat).sum_axis(Axis(0));
        grads.beta = &grads.beta + &dy.sum_axis(Axis(0));
        let dxhat = dy * &self.gamma;
        let mut dx = Array2::zeros(dy.raw_dim());
        for i in 0..dy.nrows() {
            let row_dxhat = dxhat.row(i);
            let row_xhat = cache.xhat.row(i);
            let m1 = row_dxhat.sum() / dim;
            let m2 = row_dxhat.iter().zip(row_xhat).map(|(a, b)| a * b).sum::<f64>() / dim;
            let inv = cache.inv_std[i];
            for j in 0..dy.ncols() {
                dx[[i, j]] = (row_dxhat[j] - m1 - row_xhat[j] * m2) * inv;
            }
        }
        dx
    }
}

pub fn tanh_forward(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(f64::tanh)
}

/// `y` is the forward output of [`tanh_forward`].
pub fn tanh_backward(y: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    dy * &y.mapv(|v| 1.0 - v * v)
}

/// Linear layers with tanh between them (none after the last).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer.
    inputs: Vec<Array2<f64>>,
    /// tanh output following each non-final layer.
    activations: Vec<Array2<f64>>,
}

impl Mlp {
    /// Builds `dims[0] -> dims[1] -> ... -> dims.last()`.
    pub fn xavier(dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output dimensions");
        let layers = dims.windows(2).map(|d| Linear::xavier(d[1], d[0], rng)).collect();
        Mlp { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp { layers: self.layers.iter().map(|l| Linear::zeros(l.out_dim(), l.in_dim())).collect() }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().expect("MLP has at least one layer").in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("MLP has at least one layer").out_dim()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let mut cache = MlpCache { inputs: Vec::new(), activations: Vec::new() };
        let mut current = x.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            cache.inputs.push(current.clone());
            let z = layer.forward(&current);
            current = if i < last {
                let a = tanh_forward(&z);
                cache.activations.push(a.clone());
                a
            } else {
                z
            };
        }
        (current, cache)
    }

    pub fn backward(&self, cache: &MlpCache, dy: &Array2<f64>, grads: &mut Mlp) -> Array2<f64> {
        let mut d = dy.clone();
        for i in (0..self.layers.len()).rev() {
            let dx = self.layers[i].backward(&cache.inputs[i], &d, &mut grads.layers[i]);
            d = if i > 0 { tanh_backward(&cache.activations[i - 1], &dx) } else { dx };
        }
        d
    }
}
