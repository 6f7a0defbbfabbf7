use serde::{Deserialize, Serialize};

use crate::autodiff::{Backend, Eval, Tensor};
use crate::error::Result;
use crate::model::presets;
use crate::path::ControlledPath;
use crate::seed::mix;
use crate::solver::{solve_from, BatchNoise, Record, SolveConfig};

/// Paths solved per batch by the Monte Carlo oracles.
const CHUNK: usize = 2000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbmOracleReport {
    pub mu: f64,
    pub sigma: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub mean: f64,
    pub se: f64,
    /// `exp(mu T)`.
    pub expected: f64,
    /// Largest gap between `ln z` and `(mu - sigma^2/2) t + sigma W(t)`
    /// over every path and grid point.
    pub max_log_error: f64,
}

impl GbmOracleReport {
    pub fn z_score(&self) -> f64 {
        (self.mean - self.expected) / self.se
    }
}

/// Geometric model with constant `mu` and `sigma` from `z0 = 1` against the
/// closed-form GBM solution on the same Brownian path.
pub fn gbm_oracle(mu: f64, sigma: f64, t_end: f64, n_steps: usize, n_paths: usize, seed: u64) -> Result<GbmOracleReport> {
    let model = presets::constant_gsde(1, mu, sigma)?;
    let path = ControlledPath::flat(1);
    let cfg = SolveConfig { n_steps, t_end, explosion_threshold: f64::INFINITY, record: Record::All, ..SolveConfig::default() };
    let dt = cfg.dt();
    let (mut sum, mut sum_sq, mut max_log_error) = (0.0, 0.0, 0.0f64);
    for start in (0..n_paths).step_by(CHUNK) {
        let rows = CHUNK.min(n_paths - start);
        let seeds: Vec<u64> = (start..start + rows).map(|i| mix(seed, i as u64)).collect();
        let noise = BatchNoise::new(seeds, 1, dt);
        let mut e = Eval;
        let bound = model.bind(&mut e);
        let traj = solve_from(&mut e, &bound, Tensor::filled(vec![rows, 1], 1.0), &[&path], &noise, &cfg)?;
        let mut w = vec![0.0; rows];
        for (k, z) in traj.states.iter().enumerate().skip(1) {
            let dw = noise.step(k - 1);
            let t = k as f64 * dt;
            for r in 0..rows {
                w[r] += dw.data()[r];
                let exact = (mu - 0.5 * sigma * sigma) * t + sigma * w[r];
                max_log_error = max_log_error.max((z.data()[r].ln() - exact).abs());
            }
        }
        for &v in traj.terminal().data() {
            sum += v;
            sum_sq += v * v;
        }
    }
    let n = n_paths as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    Ok(GbmOracleReport { mu, sigma, t_end, n_paths, n_steps, mean, se: (var / n).sqrt(), expected: (mu * t_end).exp(), max_log_error })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuOracleReport {
    pub theta: f64,
    pub sigma: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub n_steps: usize,
    pub variance: f64,
    /// `sigma^2 / (2 theta) (1 - exp(-2 theta T))` from `z0 = 0`.
    pub expected: f64,
    pub rel_error: f64,
}

/// Langevin model `dz = -theta z dt + sigma dW` from `z0 = 0`; terminal
/// sample variance against the exact OU variance.
pub fn ou_oracle(theta: f64, sigma: f64, t_end: f64, n_steps: usize, n_paths: usize, seed: u64) -> Result<OuOracleReport> {
    let model = presets::linear_lsde(&presets::diagonal(1, -theta), sigma)?;
    let path = ControlledPath::flat(1);
    let cfg = SolveConfig { n_steps, t_end, record: Record::TerminalOnly, ..SolveConfig::default() };
    let mut terminal = Vec::with_capacity(n_paths);
    for start in (0..n_paths).step_by(CHUNK) {
        let rows = CHUNK.min(n_paths - start);
        let seeds: Vec<u64> = (start..start + rows).map(|i| mix(seed, i as u64)).collect();
        let mut e = Eval;
        let bound = model.bind(&mut e);
        let z0 = e.constant(Tensor::zeros(vec![rows, 1]));
        let traj = solve_from(&mut e, &bound, z0, &[&path], &cfg.noise(seeds, 1), &cfg)?;
        terminal.extend_from_slice(traj.terminal().data());
    }
    let n = n_paths as f64;
    let mean = terminal.iter().sum::<f64>() / n;
    let variance = terminal.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let expected = sigma * sigma / (2.0 * theta) * (1.0 - (-2.0 * theta * t_end).exp());
    Ok(OuOracleReport { theta, sigma, t_end, n_paths, n_steps, variance, expected, rel_error: (variance / expected - 1.0).abs() })
}
