//! Hand-set models with closed-form fields, used by oracles and the
//! stability experiments.

use crate::autodiff::{Activation, Dense, Mlp, Tensor};
use crate::error::Result;
use crate::model::{DiffusionForm, ModelConfig, ModelKind, SdeModel, SigmaNet};

const TIME_DIM: usize = 2;

fn base(kind: ModelKind, dim: usize) -> ModelConfig {
    ModelConfig {
        kind,
        input_dim: 1,
        output_dim: dim,
        latent_dim: dim,
        time_dim: TIME_DIM,
        n_layers: 0,
        readout_hidden: None,
        dropout: 0.0,
        sigma_net: SigmaNet::Affine,
        activation: Some(Activation::Tanh),
        ..ModelConfig::default()
    }
}

fn affine(weight: Tensor, bias: Vec<f64>) -> Result<Mlp> {
    Mlp::from_layers(vec![Dense { weight, bias: Tensor::vector(bias), activation: Activation::Identity }], false)
}

/// `[rows, cols]` matrix equal to `a * I` placed at column offset `at`.
fn block(rows: usize, cols: usize, at: usize, a: &[Vec<f64>]) -> Tensor {
    let mut w = Tensor::zeros(vec![rows, cols]);
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            w.data_mut()[i * cols + at + j] = v;
        }
    }
    w
}

fn scaled_identity(d: usize, a: f64) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { a } else { 0.0 }).collect()).collect()
}

/// Control net that passes `z` through unchanged.
fn select_state(d: usize) -> Result<Mlp> {
    affine(block(d, TIME_DIM + d + 2, TIME_DIM, &scaled_identity(d, 1.0)), vec![0.0; d])
}

fn constant_sigma(d: usize, sigma: f64) -> Result<Mlp> {
    affine(Tensor::zeros(vec![d, TIME_DIM]), vec![sigma; d])
}

/// Langevin model `dz = A z dt + sigma dW` with `A` given row-wise.
pub fn linear_lsde(a: &[Vec<f64>], sigma: f64) -> Result<SdeModel> {
    let d = a.len();
    let mut m = SdeModel::new(base(ModelKind::Lsde, d))?;
    m.zeta = Some(select_state(d)?);
    m.gamma = affine(block(d, d, 0, a), vec![0.0; d])?;
    m.sigma = Some(constant_sigma(d, sigma)?);
    Ok(m)
}

/// Linear-noise model `dz = A z dt + sigma z dW`.
pub fn linear_lnsde(a: &[Vec<f64>], sigma: f64) -> Result<SdeModel> {
    let d = a.len();
    let mut m = SdeModel::new(base(ModelKind::Lnsde, d))?;
    m.zeta = Some(select_state(d)?);
    m.gamma = affine(block(d, TIME_DIM + d, TIME_DIM, a), vec![0.0; d])?;
    m.sigma = Some(constant_sigma(d, sigma)?);
    Ok(m)
}

/// Geometric model with constant relative drift: `dz = mu z dt + sigma z dW`.
pub fn constant_gsde(d: usize, mu: f64, sigma: f64) -> Result<SdeModel> {
    let mut m = SdeModel::new(base(ModelKind::Gsde, d))?;
    m.gamma = affine(Tensor::zeros(vec![d, TIME_DIM + d]), vec![mu; d])?;
    m.sigma = Some(constant_sigma(d, sigma)?);
    Ok(m)
}

/// `a * I` as rows.
pub fn diagonal(d: usize, a: f64) -> Vec<Vec<f64>> {
    scaled_identity(d, a)
}

/// Same model with the diffusion switched off.
pub fn without_noise(model: &SdeModel) -> SdeModel {
    let mut m = model.clone();
    m.config.diffusion = Some(DiffusionForm::Zero);
    m.sigma = None;
    m
}
