use serde::{Deserialize, Serialize};

use crate::autodiff::{Backend, Eval, Tensor};
use crate::error::{Error, Result};
use crate::model::presets;
use crate::path::ControlledPath;
use crate::seed::mix;
use crate::solver::{solve_from, BatchNoise, Record, Scheme, SolveConfig};

/// Scalar geometric Brownian motion `dz = mu z dt + sigma z dW`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbmParams {
    pub mu: f64,
    pub sigma: f64,
    pub z0: f64,
    pub t_end: f64,
}

impl GbmParams {
    pub fn exact(&self, w_t: f64) -> f64 {
        self.z0 * ((self.mu - 0.5 * self.sigma * self.sigma) * self.t_end + self.sigma * w_t).exp()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub scheme: Scheme,
    pub dts: Vec<f64>,
    /// Mean absolute terminal error per step size.
    pub errors: Vec<f64>,
    pub slope: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Strong error of the linear-noise solver against the exact GBM solution.
///
/// `levels` are step counts; each must divide the finest, and every level
/// is driven by the same fine Brownian path.
pub fn strong_error(
    scheme: Scheme,
    gbm: GbmParams,
    levels: &[usize],
    n_paths: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    let finest = *levels.iter().max().ok_or_else(|| Error::InvalidArgument("no step levels".into()))?;
    if levels.len() < 2 || levels.iter().any(|&n| n == 0 || finest % n != 0) {
        return Err(Error::InvalidArgument("levels must be at least two divisors of the finest".into()));
    }
    let model = presets::linear_lnsde(&presets::diagonal(1, gbm.mu), gbm.sigma)?;
    let seeds: Vec<u64> = (0..n_paths as u64).map(|i| mix(seed, i)).collect();
    let fine_dt = gbm.t_end / finest as f64;
    let w_t = BatchNoise::refined(seeds.clone(), 1, fine_dt, finest).step(0);
    let exact: Vec<f64> = w_t.data().iter().map(|&w| gbm.exact(w)).collect();
    let path = ControlledPath::flat(1);

    let mut dts = Vec::new();
    let mut errors = Vec::new();
    for &n in levels {
        let cfg = SolveConfig { scheme, n_steps: n, t_end: gbm.t_end, explosion_threshold: f64::INFINITY, record: Record::TerminalOnly };
        let noise = BatchNoise::refined(seeds.clone(), 1, fine_dt, finest / n);
        let mut e = Eval;
        let bound = model.bind(&mut e);
        let z0 = e.constant(Tensor::filled(vec![n_paths, 1], gbm.z0));
        let traj = solve_from(&mut e, &bound, z0, &[&path], &noise, &cfg)?;
        let err = traj.terminal().data().iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>() / n_paths as f64;
        dts.push(cfg.dt());
        errors.push(err);
    }
    let slope = log_log_slope(&dts, &errors);
    Ok(ConvergenceReport { scheme, dts, errors, slope })
}

/// Euler on `dz = -lambda z dt` against `z0 e^{-lambda T}`.
pub fn ode_error(lambda: f64, levels: &[usize]) -> Result<ConvergenceReport> {
    let model = presets::without_noise(&presets::linear_lnsde(&presets::diagonal(1, -lambda), 0.0)?);
    let path = ControlledPath::flat(1);
    let exact = (-lambda).exp();
    let mut dts = Vec::new();
    let mut errors = Vec::new();
    for &n in levels {
        let cfg = SolveConfig { n_steps: n, record: Record::TerminalOnly, ..SolveConfig::default() };
        let mut e = Eval;
        let bound = model.bind(&mut e);
        let z0 = e.constant(Tensor::filled(vec![1, 1], 1.0));
        let traj = solve_from(&mut e, &bound, z0, &[&path], &cfg.noise(vec![0], 1), &cfg)?;
        dts.push(cfg.dt());
        errors.push((traj.terminal().item() - exact).abs());
    }
    let slope = log_log_slope(&dts, &errors);
    Ok(ConvergenceReport { scheme: Scheme::Euler, dts, errors, slope })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_exact_power_law() {
        let x = [0.1, 0.01, 0.001];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_log_slope(&x, &y) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn deterministic_euler_is_first_order() {
        let r = ode_error(1.0, &[16, 32, 64, 128, 256, 512]).unwrap();
        assert!((r.slope - 1.0).abs() < 0.05, "{r:?}");
    }
}
