use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Dense, Eval, Mlp, Mode, Tensor};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelKind, SdeModel, SigmaNet};
use crate::path::{ControlledPath, PathScheme};
use crate::seed::{derive, mix};
use crate::solver::{solve, BatchNoise, Record, SolveConfig};
use crate::stability::{spearman, w1_sliced};

/// Adds `rho` times standard normal noise to every observed cell, so the
/// root-mean-square perturbation per cell is `rho`.
pub fn perturb(ds: &Dataset, rho: f64, seed: u64) -> Dataset {
    let mut out = ds.clone();
    if rho == 0.0 {
        return out;
    }
    for (s, series) in out.samples.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, s as u64));
        for (v, m) in series.values.iter_mut().zip(&series.mask) {
            if *m {
                *v += rho * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    out
}

/// Constants that enter the robustness bounds, as reported alongside a curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub l_h: f64,
    pub l_zeta: Option<f64>,
    pub l_gamma: f64,
    pub l_f: f64,
    /// Constant diffusion level, when the model has one.
    pub sigma: Option<f64>,
}

impl LipschitzReport {
    pub fn of(model: &SdeModel) -> Self {
        let sigma = model.sigma.as_ref().and_then(|s| {
            let last = s.layers.last()?;
            let constant = s.layers.len() == 1 && last.weight.data().iter().all(|&w| w == 0.0);
            constant.then(|| last.bias.data()[0])
        });
        Self {
            l_h: model.h.lipschitz_upper_bound(),
            l_zeta: model.zeta.as_ref().map(Mlp::lipschitz_upper_bound),
            l_gamma: model.gamma.lipschitz_upper_bound(),
            l_f: model.readout.lipschitz_upper_bound(),
            sigma,
        }
    }
}

/// Hyperparameters of a randomly initialized dissipative model whose
/// outputs contract under input perturbation. The drift sees the latent state only,
/// so the input enters through `h(x)`; diffusion is the constant `sigma`
/// and the drift's Lipschitz constant is shrunk by `gain`. The Langevin
/// kind gets the dissipative drift `(-m I + gain R) z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DissipativeSpec {
    pub latent_dim: usize,
    pub sigma: f64,
    pub gain: f64,
    pub m: f64,
}

impl Default for DissipativeSpec {
    fn default() -> Self {
        Self { latent_dim: 8, sigma: 3.0, gain: 0.1, m: 1.0 }
    }
}

pub fn dissipative_model(kind: ModelKind, input_dim: usize, output_dim: usize, spec: &DissipativeSpec, seed: u64) -> Result<SdeModel> {
    let mut cfg = ModelConfig::new(kind, input_dim, output_dim);
    cfg.latent_dim = spec.latent_dim;
    cfg.sigma_net = SigmaNet::Affine;
    cfg.dropout = 0.0;
    cfg.use_control = false;
    cfg.seed = seed;
    let d = spec.latent_dim;
    match kind {
        ModelKind::Lsde => {
            cfg.n_layers = 0;
            let mut m = SdeModel::new(cfg)?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 11));
            let mut g = Tensor::zeros(vec![d, d]);
            for i in 0..d {
                for j in 0..d {
                    let r: f64 = rng.gen_range(-1.0..1.0) / (d as f64).sqrt();
                    g.data_mut()[i * d + j] = spec.gain * r - if i == j { spec.m } else { 0.0 };
                }
            }
            m.gamma = Mlp::from_layers(vec![Dense { weight: g, bias: Tensor::zeros(vec![d]), activation: Activation::Identity }], false)?;
            set_constant_sigma(&mut m, spec.sigma);
            Ok(m)
        }
        ModelKind::Lnsde | ModelKind::Gsde => {
            let mut m = SdeModel::new(cfg)?;
            m.gamma.scale_params(spec.gain);
            set_constant_sigma(&mut m, spec.sigma);
            Ok(m)
        }
        other => Err(Error::InvalidArgument(format!("no dissipative configuration for {other:?}"))),
    }
}

fn set_constant_sigma(m: &mut SdeModel, sigma: f64) {
    let s = m.sigma.as_mut().expect("affine sigma");
    s.scale_params(0.0);
    s.final_tanh = false;
    for b in s.layers[0].bias.data_mut() {
        *b = sigma;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub depth: f64,
    pub n_steps: usize,
    /// `None` when a solve exploded at this depth.
    pub w1: Option<f64>,
    /// Spread of the estimate over disjoint sample folds.
    pub se: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessCurve {
    pub kind: ModelKind,
    pub rho: f64,
    pub points: Vec<CurvePoint>,
    /// Spearman correlation of W1 with depth over valid points.
    pub spearman: f64,
    pub lipschitz: LipschitzReport,
}

impl RobustnessCurve {
    /// `depth,n_steps,w1,se` rows; invalid depths leave `w1` and `se` empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("depth,n_steps,w1,se\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for p in &self.points {
            s.push_str(&format!("{:?},{},{},{}\n", p.depth, p.n_steps, opt(p.w1), opt(p.se)));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveSpec {
    pub depths: Vec<f64>,
    /// Solver steps per unit of depth.
    pub steps_per_unit: usize,
    pub n_projections: usize,
    pub folds: usize,
    pub path_scheme: PathScheme,
}

impl Default for CurveSpec {
    fn default() -> Self {
        Self { depths: vec![1.0, 2.0, 4.0, 8.0], steps_per_unit: 100, n_projections: 50, folds: 5, path_scheme: PathScheme::Linear }
    }
}

fn readouts(model: &SdeModel, paths: &[&ControlledPath], seeds: &[u64], scfg: &SolveConfig) -> Result<Tensor> {
    let mut e = Eval;
    let bound = model.bind(&mut e);
    let noise = BatchNoise::new(seeds.to_vec(), model.config.latent_dim, scfg.dt());
    let traj = solve(&mut e, &bound, paths, &noise, scfg)?;
    bound.readout(&mut e, traj.terminal(), Mode::Eval)
}

/// Sliced W1 between readouts on clean and `rho`-perturbed inputs at each
/// depth. Clean and perturbed solves share Brownian paths, and every depth
/// keeps the step size fixed, so deeper solves extend the same noise.
pub fn robustness_curve(model: &SdeModel, ds: &Dataset, rho: f64, spec: &CurveSpec, seed: u64) -> Result<RobustnessCurve> {
    if !(rho >= 0.0) {
        return Err(Error::InvalidArgument("rho must be nonnegative".into()));
    }
    let noisy = perturb(ds, rho, derive(seed, &[1]));
    let build = |d: &Dataset| -> Result<Vec<ControlledPath>> {
        d.samples.iter().map(|s| ControlledPath::build(s, spec.path_scheme)).collect()
    };
    let (clean_paths, noisy_paths) = (build(ds)?, build(&noisy)?);
    let clean: Vec<&ControlledPath> = clean_paths.iter().collect();
    let pert: Vec<&ControlledPath> = noisy_paths.iter().collect();
    let seeds: Vec<u64> = (0..ds.len() as u64).map(|i| derive(seed, &[2, i])).collect();
    let proj_seed = derive(seed, &[3]);

    let mut points = Vec::new();
    for &depth in &spec.depths {
        let n_steps = ((depth * spec.steps_per_unit as f64).round() as usize).max(1);
        let scfg = SolveConfig { n_steps, t_end: depth, record: Record::TerminalOnly, ..SolveConfig::default() };
        let outs = readouts(model, &clean, &seeds, &scfg).and_then(|a| Ok((a, readouts(model, &pert, &seeds, &scfg)?)));
        let (a, b) = match outs {
            Ok(v) => v,
            Err(e) if e.is_numerical() => {
                points.push(CurvePoint { depth, n_steps, w1: None, se: None });
                continue;
            }
            Err(e) => return Err(e),
        };
        let w1 = w1_sliced(&a, &b, spec.n_projections, proj_seed)?.value;
        let k = spec.folds.max(2).min(ds.len());
        let fold_vals: Vec<f64> = (0..k)
            .map(|f| {
                let rows: Vec<usize> = (0..a.rows()).filter(|r| r % k == f).collect();
                let pick = |t: &Tensor| Tensor::from_rows(&rows.iter().map(|&r| t.row(r).to_vec()).collect::<Vec<_>>());
                w1_sliced(&pick(&a), &pick(&b), spec.n_projections, proj_seed).map(|e| e.value)
            })
            .collect::<Result<_>>()?;
        let mean = fold_vals.iter().sum::<f64>() / k as f64;
        let sd = (fold_vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt();
        points.push(CurvePoint { depth, n_steps, w1: Some(w1), se: Some(sd / (k as f64).sqrt()) });
    }
    let valid: Vec<(f64, f64)> = points.iter().filter_map(|p| p.w1.map(|w| (p.depth, w))).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = valid.into_iter().unzip();
    let rho_s = if xs.len() >= 2 { spearman(&xs, &ys) } else { 0.0 };
    Ok(RobustnessCurve { kind: model.kind(), rho, points, spearman: rho_s, lipschitz: LipschitzReport::of(model) })
}
