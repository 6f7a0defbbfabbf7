use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check, relative_error, Activation, Backend, Eval, Mlp, Mode, ScalarFn, Tape, Tensor};
use crate::data::{synth, SynthKind, SynthSpec};
use crate::error::Result;
use crate::model::{ModelConfig, ModelKind, SdeModel};
use crate::path::PathScheme;
use crate::seed::derive;
use crate::solver::{solve, BatchNoise, Record, SolveConfig};
use crate::train::trainer::loss_of;
use crate::train::{Prepared, Task};

fn loss<B: Backend>(b: &mut B, model: &SdeModel, data: &Prepared, idx: &[usize], noise: &BatchNoise, scfg: &SolveConfig) -> Result<(B::T, Vec<B::T>)> {
    let bound = model.bind(b);
    let traj = solve(b, &bound, &data.paths_of(idx), noise, scfg)?;
    let out = bound.readout(b, traj.terminal(), Mode::Eval)?;
    Ok((loss_of(b, data, idx, &out)?, bound.vars()))
}

/// Max relative error between backpropagation through the solver and
/// central differences of the same loss in every parameter.
pub fn model_grad_check(model: &SdeModel, data: &Prepared, idx: &[usize], scfg: &SolveConfig, seed: u64, fd_step: f64) -> Result<f64> {
    let noise = BatchNoise::new(idx.iter().map(|&i| derive(seed, &[i as u64])).collect(), model.config.latent_dim, scfg.dt());
    let mut tape = Tape::new();
    let (l, vars) = loss(&mut tape, model, data, idx, &noise, scfg)?;
    let grads = tape.backward(l)?;
    let analytic: Vec<f64> = vars.into_iter().flat_map(|v| grads.get(v).into_data()).collect();

    let mut probe = model.clone();
    let mut numeric = Vec::with_capacity(analytic.len());
    let n_params = probe.params().len();
    for p in 0..n_params {
        let len = probe.params()[p].numel();
        for k in 0..len {
            let orig = probe.params()[p].data()[k];
            probe.params_mut()[p].data_mut()[k] = orig + fd_step;
            let hi = loss(&mut Eval, &probe, data, idx, &noise, scfg)?.0.item();
            probe.params_mut()[p].data_mut()[k] = orig - fd_step;
            let lo = loss(&mut Eval, &probe, data, idx, &noise, scfg)?.0.item();
            probe.params_mut()[p].data_mut()[k] = orig;
            numeric.push((hi - lo) / (2.0 * fd_step));
        }
    }
    Ok(relative_error(&analytic, &numeric))
}

struct SquaredNorm<'a>(&'a Mlp);

impl ScalarFn for SquaredNorm<'_> {
    fn eval<B: Backend>(&self, b: &mut B, x: &B::T) -> Result<B::T> {
        let vars = self.0.bind(b);
        let y = vars.forward(b, x, Mode::Eval)?;
        let sq = b.square(&y);
        Ok(b.sum(&sq))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    /// Input gradient of a tanh MLP.
    pub network: f64,
    /// Parameter gradient through a short solve, per model kind.
    pub models: Vec<(ModelKind, f64)>,
}

impl GradReport {
    pub fn worst_model(&self) -> f64 {
        self.models.iter().map(|m| m.1).fold(0.0, f64::max)
    }
}

/// Gradient checks on a 2-step solve with a 3-dimensional latent state for
/// every stochastic kind, plus a standalone network.
pub fn gradient_suite(seed: u64) -> Result<GradReport> {
    let mlp = Mlp::init(3, &[8, 8], 2, Activation::Tanh, true, derive(seed, &[0]))?;
    let x = Tensor::matrix(2, 3, vec![0.3, -0.7, 1.1, -0.2, 0.5, 0.9]);
    let network = grad_check(&SquaredNorm(&mlp), &x, 1e-6)?;

    let ds = synth(&SynthSpec { kind: SynthKind::Spirals, n_samples: 4, length: 8, noise: 0.1, seed })?;
    let data = Prepared::new(&ds, Task::Classification, PathScheme::NaturalCubic)?;
    let scfg = SolveConfig { n_steps: 2, record: Record::TerminalOnly, ..SolveConfig::default() };
    let idx = [0, 1, 2, 3];
    let mut models = Vec::new();
    for kind in [ModelKind::NaiveSde, ModelKind::Lsde, ModelKind::Lnsde, ModelKind::Gsde] {
        let mut cfg = ModelConfig::new(kind, 2, 2);
        cfg.latent_dim = 3;
        cfg.time_dim = 4;
        cfg.hidden = 8;
        cfg.n_layers = 1;
        cfg.readout_hidden = Some(8);
        cfg.seed = derive(seed, &[1, kind as u64]);
        let model = SdeModel::new(cfg)?;
        models.push((kind, model_grad_check(&model, &data, &idx, &scfg, derive(seed, &[2]), 1e-6)?));
    }
    Ok(GradReport { network, models })
}
