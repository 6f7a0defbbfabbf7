use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Backend, Tensor};
use crate::error::{Error, Result};
use crate::seed::mix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    /// Upper bound on the slope of the activation.
    pub fn slope_bound(self) -> f64 {
        match self {
            Activation::Sigmoid => 0.25,
            _ => 1.0,
        }
    }

    fn apply<B: Backend>(self, b: &mut B, x: &B::T) -> B::T {
        match self {
            Activation::Relu => b.relu(x),
            Activation::Tanh => b.tanh(x),
            Activation::Sigmoid => b.sigmoid(x),
            Activation::Identity => x.clone(),
        }
    }
}

/// Forward-pass mode. Dropout only fires in training mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train { dropout_seed: u64 },
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `[out, in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Fully connected network. Hidden layers use one activation kind, the last
/// layer is affine, optionally followed by `tanh`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub final_tanh: bool,
    pub dropout: f64,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn init(
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        activation: Activation,
        final_tanh: bool,
        seed: u64,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 || hidden.contains(&0) {
            return Err(Error::InvalidArgument("mlp dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![in_dim];
        dims.extend_from_slice(hidden);
        dims.push(out_dim);
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (dims[i], dims[i + 1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
                Dense {
                    weight: Tensor::matrix(fan_out, fan_in, w),
                    bias: Tensor::zeros(vec![fan_out]),
                    activation: if i + 1 == n { Activation::Identity } else { activation },
                }
            })
            .collect();
        Ok(Self { layers, final_tanh, dropout: 0.0 })
    }

    pub fn from_layers(layers: Vec<Dense>, final_tanh: bool) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("mlp needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.numel() != l.out_dim() {
                return Err(Error::Shape(format!("layer {i}: bias does not match weight rows")));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::Shape(format!("layer {i}: input dim does not match previous output")));
            }
        }
        Ok(Self { layers, final_tanh, dropout: 0.0 })
    }

    pub fn with_dropout(mut self, rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate} not in [0, 1)")));
        }
        self.dropout = rate;
        Ok(self)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }

    /// Multiplies every weight and bias by `factor`.
    pub fn scale_params(&mut self, factor: f64) {
        for p in self.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// Product over layers of `‖W‖₂ · slope bound`.
    pub fn lipschitz_upper_bound(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.spectral_norm(1e-6) * l.activation.slope_bound())
            .product()
    }

    pub fn bind<B: Backend>(&self, b: &mut B) -> MlpVars<B::T> {
        MlpVars {
            layers: self
                .layers
                .iter()
                .map(|l| (b.param(&l.weight), b.param(&l.bias), l.activation))
                .collect(),
            final_tanh: self.final_tanh,
            dropout: self.dropout,
            in_dim: self.in_dim(),
        }
    }

    /// One-shot eager forward pass.
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut e = crate::autodiff::Eval;
        let vars = self.bind(&mut e);
        vars.forward(&mut e, x, mode)
    }
}

/// An [`Mlp`] whose parameters live on a backend.
#[derive(Clone, Debug)]
pub struct MlpVars<T> {
    layers: Vec<(T, T, Activation)>,
    final_tanh: bool,
    dropout: f64,
    in_dim: usize,
}

impl<T: Clone> MlpVars<T> {
    /// Parameter handles in declaration order (w0, b0, w1, b1, ...).
    pub fn vars(&self) -> Vec<T> {
        self.layers.iter().flat_map(|(w, b, _)| [w.clone(), b.clone()]).collect()
    }

    pub fn forward<B: Backend<T = T>>(&self, b: &mut B, x: &T, mode: Mode) -> Result<T> {
        let cols = b.value(x).cols();
        if cols != self.in_dim {
            return Err(Error::Shape(format!("mlp expects {} inputs, got {cols}", self.in_dim)));
        }
        let n = self.layers.len();
        let mut h = x.clone();
        for (i, (w, bias, act)) in self.layers.iter().enumerate() {
            h = b.affine(&h, w, bias)?;
            h = act.apply(b, &h);
            if i + 1 < n && self.dropout > 0.0 {
                if let Mode::Train { dropout_seed } = mode {
                    let shape = b.value(&h).shape().to_vec();
                    let mask = dropout_mask(shape, self.dropout, mix(dropout_seed, i as u64));
                    h = b.mul_const(&h, mask)?;
                }
            }
        }
        if self.final_tanh {
            h = b.tanh(&h);
        }
        Ok(h)
    }
}

/// Inverted-dropout mask: entries are `0` with probability `rate`, else `1/(1-rate)`.
pub fn dropout_mask(shape: Vec<usize>, rate: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - rate);
    let n = shape.iter().product();
    let data = (0..n).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
    Tensor::new(shape, data).expect("mask shape")
}
