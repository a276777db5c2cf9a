//! Small dense encoders with hand-written backward passes.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contrastive::Temperature;
use crate::negsampler::{domain, SamplerRng};

/// Fully connected layer `y = x W + b`, with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    /// Glorot-uniform weights, small uniform biases.
    fn init(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let lim = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            w: Array2::from_shape_simple_fn((inputs, outputs), || rng.random_range(-lim..lim)),
            b: Array1::from_shape_simple_fn(outputs, || rng.random_range(-0.1..0.1)),
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }

    fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Two dense layers with a tanh between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp2 {
    pub l1: Dense,
    pub l2: Dense,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    x: Array2<f64>,
    hidden: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub l1: DenseGrad,
    pub l2: DenseGrad,
}

impl Mlp2 {
    fn init(inputs: usize, hidden: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            l1: Dense::init(inputs, hidden, rng),
            l2: Dense::init(hidden, outputs, rng),
        }
    }

    pub fn inputs(&self) -> usize {
        self.l1.w.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.l2.w.ncols()
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x).0
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let hidden = self.l1.forward(x).mapv_into(f64::tanh);
        let y = self.l2.forward(&hidden);
        (
            y,
            MlpCache {
                x: x.clone(),
                hidden,
            },
        )
    }

    /// Parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, dy: &Array2<f64>) -> (MlpGrad, Array2<f64>) {
        let l2 = DenseGrad {
            w: cache.hidden.t().dot(dy),
            b: dy.sum_axis(Axis(0)),
        };
        let mut dpre = dy.dot(&self.l2.w.t());
        dpre.zip_mut_with(&cache.hidden, |d, h| *d *= 1.0 - h * h);
        let l1 = DenseGrad {
            w: cache.x.t().dot(&dpre),
            b: dpre.sum_axis(Axis(0)),
        };
        let dx = dpre.dot(&self.l1.w.t());
        (MlpGrad { l1, l2 }, dx)
    }

    fn n_params(&self) -> usize {
        self.l1.n_params() + self.l2.n_params()
    }

    fn layers(&self) -> [&Dense; 2] {
        [&self.l1, &self.l2]
    }

    fn layers_mut(&mut self) -> [&mut Dense; 2] {
        [&mut self.l1, &mut self.l2]
    }
}

impl MlpGrad {
    fn layers(&self) -> [&DenseGrad; 2] {
        [&self.l1, &self.l2]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelDims {
    pub feature_dim: usize,
    pub n_bits: usize,
    pub hidden_dim: usize,
    pub repr_dim: usize,
    pub proj_dim: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            feature_dim: 32,
            n_bits: 35,
            hidden_dim: 64,
            repr_dim: 64,
            proj_dim: 32,
        }
    }
}

/// Image encoder `f_I`, manifestation encoder `f_M`, shared projector `g`
/// and the trainable temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub f_i: Mlp2,
    pub f_m: Mlp2,
    pub g: Mlp2,
    pub temperature: Temperature,
}

/// Gradient of the loss with respect to every parameter of a [`ToyModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrad {
    pub f_i: Option<MlpGrad>,
    pub f_m: Option<MlpGrad>,
    pub g: MlpGrad,
    pub d_log_tau: f64,
}

impl ToyModel {
    /// Initialisation depends only on `dims`, `tau` and `seed`.
    pub fn init(dims: ModelDims, tau: f64, seed: u64) -> Self {
        let mut rng = SamplerRng::new(seed).stream(domain::INIT, 0, 0);
        let d = dims;
        Self {
            f_i: Mlp2::init(d.feature_dim, d.hidden_dim, d.repr_dim, &mut rng),
            f_m: Mlp2::init(d.n_bits, d.hidden_dim, d.repr_dim, &mut rng),
            g: Mlp2::init(d.repr_dim, d.hidden_dim, d.proj_dim, &mut rng),
            temperature: Temperature::new(tau),
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            feature_dim: self.f_i.inputs(),
            n_bits: self.f_m.inputs(),
            hidden_dim: self.f_i.l1.w.ncols(),
            repr_dim: self.f_i.outputs(),
            proj_dim: self.g.outputs(),
        }
    }

    /// Trainable scalars, temperature included.
    pub fn n_params(&self) -> usize {
        self.f_i.n_params() + self.f_m.n_params() + self.g.n_params() + 1
    }

    fn dense_layers(&self) -> impl Iterator<Item = &Dense> {
        [&self.f_i, &self.f_m, &self.g].into_iter().flat_map(|m| m.layers())
    }

    /// SHA-256 over every parameter's little-endian bytes, in a fixed order.
    pub fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        for layer in self.dense_layers() {
            for x in layer.w.iter().chain(layer.b.iter()) {
                h.update(x.to_le_bytes());
            }
        }
        h.update(self.temperature.log_tau.to_le_bytes());
        hex::encode(h.finalize())
    }

    /// SGD step; weight decay applies to weight matrices only.
    pub fn sgd_step(&mut self, grad: &ModelGrad, lr: f64, weight_decay: f64) {
        fn update(m: &mut Mlp2, g: &MlpGrad, lr: f64, wd: f64) {
            for (layer, lg) in m.layers_mut().into_iter().zip(g.layers()) {
                layer.w.zip_mut_with(&lg.w, |w, d| *w -= lr * (d + wd * *w));
                layer.b.zip_mut_with(&lg.b, |b, d| *b -= lr * d);
            }
        }
        if let Some(g) = &grad.f_i {
            update(&mut self.f_i, g, lr, weight_decay);
        }
        if let Some(g) = &grad.f_m {
            update(&mut self.f_m, g, lr, weight_decay);
        }
        update(&mut self.g, &grad.g, lr, weight_decay);
        self.temperature.step(grad.d_log_tau, lr);
    }
}
