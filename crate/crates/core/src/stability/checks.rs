use serde::{Deserialize, Serialize};

use crate::autodiff::{Backend, Eval, Tensor};
use crate::data::{synth, SynthKind, SynthSpec};
use crate::error::Result;
use crate::model::{presets, ModelConfig, ModelKind, SdeModel};
use crate::path::{ControlledPath, PathScheme};
use crate::seed::derive;
use crate::solver::{initial_inputs, solve_from, BatchNoise, Record, SolveConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub kind: ModelKind,
    pub n_models: usize,
    pub n_paths: usize,
    /// Smallest state component seen anywhere.
    pub min_state: f64,
    /// States below zero.
    pub negative_count: usize,
    /// Grid points where a component started at zero but later was not.
    pub absorption_violations: usize,
    /// Model seeds with at least one violation.
    pub failing_seeds: Vec<u64>,
    pub n_exploded_models: usize,
}

impl PositivityReport {
    pub fn passed(&self) -> bool {
        self.negative_count == 0 && self.absorption_violations == 0 && self.n_exploded_models == 0
    }
}

/// Random models of `kind` on spiral inputs. Every path starts from
/// `h(x0)` with its first latent component set to zero; the report
/// counts negative states and zeroed components that move.
pub fn check_positivity_and_absorption(kind: ModelKind, n_models: usize, n_paths: usize, seed: u64) -> Result<PositivityReport> {
    let ds = synth(&SynthSpec { kind: SynthKind::Spirals, n_samples: n_paths.max(4), length: 16, noise: 0.1, seed })?;
    let paths: Vec<ControlledPath> = ds.samples[..n_paths]
        .iter()
        .map(|s| ControlledPath::build(s, PathScheme::Linear))
        .collect::<Result<_>>()?;
    let refs: Vec<&ControlledPath> = paths.iter().collect();
    let scfg = SolveConfig { record: Record::All, ..SolveConfig::default() };
    let mut report = PositivityReport {
        kind,
        n_models,
        n_paths,
        min_state: f64::INFINITY,
        negative_count: 0,
        absorption_violations: 0,
        failing_seeds: Vec::new(),
        n_exploded_models: 0,
    };
    for m in 0..n_models {
        let model_seed = derive(seed, &[m as u64]);
        let mut cfg = ModelConfig::new(kind, 2, 2);
        cfg.seed = model_seed;
        let model = SdeModel::new(cfg)?;
        let mut e = Eval;
        let bound = model.bind(&mut e);
        let x0 = initial_inputs(&refs);
        let mut z0 = bound.init_state(&mut e, &x0)?;
        let cols = z0.cols();
        for r in 0..n_paths {
            z0.data_mut()[r * cols] = 0.0;
        }
        let noise = BatchNoise::new((0..n_paths as u64).map(|i| derive(model_seed, &[i])).collect(), z0.cols(), scfg.dt());
        let traj = match solve_from(&mut e, &bound, z0, &refs, &noise, &scfg) {
            Ok(t) => t,
            Err(err) if err.is_numerical() => {
                report.n_exploded_models += 1;
                report.failing_seeds.push(model_seed);
                continue;
            }
            Err(err) => return Err(err),
        };
        let mut bad = false;
        for z in &traj.states {
            for r in 0..z.rows() {
                for (c, &v) in z.row(r).iter().enumerate() {
                    report.min_state = report.min_state.min(v);
                    if v < 0.0 {
                        report.negative_count += 1;
                        bad = true;
                    }
                    if c == 0 && v != 0.0 {
                        report.absorption_violations += 1;
                        bad = true;
                    }
                }
            }
        }
        if bad {
            report.failing_seeds.push(model_seed);
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub m: f64,
    pub b: f64,
    pub sigma: f64,
    pub dim: usize,
    pub t_end: f64,
    pub n_paths: usize,
    /// `(E|X(0)|^2 + b/m) exp(d sigma^2 / 2m)`.
    pub bound: f64,
    /// Largest sample second moment over the grid.
    pub sup_moment: f64,
    /// Standard error of the sample moment at the maximizing grid point.
    pub se: f64,
    pub passed: bool,
}

/// Simulates `dX = -m X dt + sigma X dW` and compares the largest sample
/// second moment on the grid with its moment bound.
pub fn check_moment_bound(m: f64, sigma: f64, z0: &[f64], t_end: f64, n_steps: usize, n_paths: usize, seed: u64) -> Result<MomentReport> {
    // The drift is exactly -m x, so the dissipativity constant b is 0.
    let b = 0.0;
    let d = z0.len();
    let model = presets::linear_lnsde(&presets::diagonal(d, -m), sigma)?;
    let scfg = SolveConfig { n_steps, t_end, explosion_threshold: f64::INFINITY, record: Record::All, ..SolveConfig::default() };
    let path = ControlledPath::flat(1);
    let mut sum = vec![0.0; n_steps + 1];
    let mut sum_sq = vec![0.0; n_steps + 1];
    const CHUNK: usize = 2000;
    let mut start = 0;
    while start < n_paths {
        let n = CHUNK.min(n_paths - start);
        let mut e = Eval;
        let bound = model.bind(&mut e);
        let init = Tensor::matrix(n, d, (0..n).flat_map(|_| z0.iter().copied()).collect());
        let z = e.constant(init);
        let noise = BatchNoise::new((start..start + n).map(|i| derive(seed, &[i as u64])).collect(), d, scfg.dt());
        let traj = solve_from(&mut e, &bound, z, &[&path], &noise, &scfg)?;
        for (k, s) in traj.states.iter().enumerate() {
            for r in 0..n {
                let sq: f64 = s.row(r).iter().map(|v| v * v).sum();
                sum[k] += sq;
                sum_sq[k] += sq * sq;
            }
        }
        start += n;
    }
    let nf = n_paths as f64;
    let (k, sup) = sum.iter().map(|s| s / nf).enumerate().fold((0, f64::NEG_INFINITY), |acc, (k, v)| if v > acc.1 { (k, v) } else { acc });
    let var = (sum_sq[k] / nf - sup * sup).max(0.0);
    let se = (var / nf).sqrt();
    let x0_sq: f64 = z0.iter().map(|v| v * v).sum();
    let bound = (x0_sq + b / m) * (d as f64 * sigma * sigma / (2.0 * m)).exp();
    Ok(MomentReport { m, b, sigma, dim: d, t_end, n_paths, bound, sup_moment: sup, se, passed: sup <= bound + 3.0 * se })
}
