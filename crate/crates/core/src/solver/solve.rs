use std::sync::atomic::{AtomicBool, Ordering};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Backend, Tensor};
use crate::error::{Error, Result};
use crate::model::{BoundModel, DiffusionForm, ModelKind};
use crate::path::ControlledPath;
use crate::solver::BatchNoise;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Euler,
    Milstein,
}

/// Which states a solve keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Record {
    All,
    /// Initial and terminal state only.
    TerminalOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    pub scheme: Scheme,
    pub n_steps: usize,
    /// Integration horizon `T`; the solve runs on `[0, T]`.
    pub t_end: f64,
    /// Largest allowed row 2-norm of the state.
    pub explosion_threshold: f64,
    pub record: Record,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { scheme: Scheme::Euler, n_steps: 100, t_end: 1.0, explosion_threshold: 1e6, record: Record::All }
    }
}

impl SolveConfig {
    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || !(self.t_end > 0.0) || !(self.explosion_threshold > 0.0) {
            return Err(Error::InvalidArgument("solver needs n_steps >= 1, T > 0 and a positive threshold".into()));
        }
        Ok(())
    }

    /// Fresh noise for `seeds.len()` paths on this grid.
    pub fn noise(&self, seeds: Vec<u64>, dim: usize) -> BatchNoise {
        BatchNoise::new(seeds, dim, self.dt())
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory<T> {
    pub times: Vec<f64>,
    pub states: Vec<T>,
    /// Set when Milstein was requested for a diffusion without a closed
    /// form derivative and Euler was used instead.
    pub euler_fallback: bool,
}

impl<T> Trajectory<T> {
    pub fn terminal(&self) -> &T {
        self.states.last().expect("trajectory has at least one state")
    }
}

/// Per-row controlled paths mapped onto solver time.
///
/// Solver time `s` in `[0, 1]` covers the observation window; beyond 1
/// the path holds its final value and its derivative is zero.
struct PathInputs<'a> {
    paths: &'a [&'a ControlledPath],
    rows: usize,
}

impl<'a> PathInputs<'a> {
    fn new(paths: &'a [&'a ControlledPath], rows: usize) -> Result<Self> {
        if paths.is_empty() || (paths.len() != 1 && paths.len() != rows) {
            return Err(Error::Shape(format!("{} paths for {rows} rows", paths.len())));
        }
        let dim = paths[0].dim();
        if paths.iter().any(|p| p.dim() != dim) {
            return Err(Error::Shape("paths differ in dimension".into()));
        }
        Ok(Self { paths, rows })
    }

    fn dim(&self) -> usize {
        self.paths[0].dim()
    }

    fn gather(&self, f: impl Fn(&ControlledPath) -> Vec<f64>) -> Tensor {
        let d = self.dim();
        let data = if self.paths.len() == 1 {
            let v = f(self.paths[0]);
            (0..self.rows).flat_map(|_| v.iter().copied()).collect()
        } else {
            self.paths.iter().flat_map(|p| f(p)).collect()
        };
        Tensor::matrix(self.rows, d, data)
    }

    fn value(&self, s: f64) -> Tensor {
        self.gather(|p| p.eval(p.start() + s.min(1.0) * (p.end() - p.start())))
    }

    fn deriv(&self, s: f64) -> Tensor {
        self.gather(|p| {
            if s < 1.0 {
                let span = p.end() - p.start();
                p.deriv(p.start() + s * span).into_iter().map(|v| v * span).collect()
            } else {
                vec![0.0; p.dim()]
            }
        })
    }
}

/// Observed values at the first knot (time channel dropped), one row per path.
pub fn initial_inputs(paths: &[&ControlledPath]) -> Tensor {
    let d = paths[0].dim() - 1;
    let data = paths.iter().flat_map(|p| p.eval(p.start()).into_iter().skip(1)).collect();
    Tensor::matrix(paths.len(), d, data)
}

/// Solves from `z0 = h(x0)` with one path per row.
pub fn solve<B: Backend>(
    b: &mut B,
    model: &BoundModel<B::T>,
    paths: &[&ControlledPath],
    noise: &BatchNoise,
    cfg: &SolveConfig,
) -> Result<Trajectory<B::T>> {
    let x0 = b.constant(initial_inputs(paths));
    let z0 = model.init_state(b, &x0)?;
    solve_from(b, model, z0, paths, noise, cfg)
}

static FALLBACK_WARNED: AtomicBool = AtomicBool::new(false);

/// Solves from a given initial state. `paths` holds one path per row, or
/// a single path shared by every row.
pub fn solve_from<B: Backend>(
    b: &mut B,
    model: &BoundModel<B::T>,
    z0: B::T,
    paths: &[&ControlledPath],
    noise: &BatchNoise,
    cfg: &SolveConfig,
) -> Result<Trajectory<B::T>> {
    cfg.validate()?;
    let (rows, d) = {
        let v = b.value(&z0);
        (v.rows(), v.cols())
    };
    if d != model.config.latent_dim {
        return Err(Error::Shape(format!("state has {d} columns, model expects {}", model.config.latent_dim)));
    }
    let inputs = PathInputs::new(paths, rows)?;
    if inputs.dim() != model.config.input_dim + 1 {
        return Err(Error::Shape("path dimension does not match the model input".into()));
    }
    let kind = model.kind();
    let form = model.config.diffusion_form();
    let stochastic = kind.is_stochastic() && form != DiffusionForm::Zero;
    let dt = cfg.dt();
    if stochastic {
        if noise.rows() != rows || noise.dim() != d {
            return Err(Error::Shape(format!(
                "noise is {}x{}, state is {rows}x{d}",
                noise.rows(),
                noise.dim()
            )));
        }
        if (noise.dt() - dt).abs() > 1e-12 * dt {
            return Err(Error::InvalidArgument(format!("noise step {} differs from solver step {dt}", noise.dt())));
        }
    }
    let milstein = cfg.scheme == Scheme::Milstein && stochastic;
    let euler_fallback = milstein && form == DiffusionForm::Network;
    if euler_fallback && !FALLBACK_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("Milstein needs a closed-form diffusion derivative; using Euler for the network diffusion");
    }

    // Geometric kind: integrate y = ln z, with zero components masked out.
    let mut log_state = None;
    if kind == ModelKind::Gsde {
        let v = b.value(&z0);
        if let Some((index, &value)) = v.data().iter().enumerate().find(|(_, x)| **x < 0.0) {
            return Err(Error::NegativeStateGsde { index, value });
        }
        let mask = v.map(|x| if x > 0.0 { 1.0 } else { 0.0 });
        let shift = mask.map(|m| 1.0 - m);
        let shifted = b.add_const(&z0, shift)?;
        log_state = Some((b.ln(&shifted), mask));
    }

    let mut times = vec![0.0];
    let mut states = vec![z0.clone()];
    let mut z = z0;
    for k in 0..cfg.n_steps {
        let s = k as f64 * dt;
        let x_t = model.has_control().then(|| b.constant(inputs.value(s)));
        let next = match kind {
            ModelKind::Ncde => {
                let f = model.cde_field(b, s, &z)?;
                let dx = b.constant(inputs.deriv(s));
                let v = b.batched_matvec(&f, &dx, d)?;
                let inc = b.scale(&v, dt);
                b.add(&z, &inc)?
            }
            ModelKind::Gsde => {
                let (y, mask) = log_state.take().expect("log state");
                let g = model.drift_core(b, s, &z, x_t.as_ref())?;
                let sig = model.sigma_t(b, s, rows)?;
                let sq = b.square(&sig);
                let half = b.scale(&sq, 0.5);
                let rate = b.sub(&g, &half)?;
                let inc = b.scale(&rate, dt);
                let mut y = b.add(&y, &inc)?;
                let shock = b.mul_const(&sig, noise.step(k))?;
                y = b.add(&y, &shock)?;
                let e = b.exp(&y);
                let zn = b.mul_const(&e, mask.clone())?;
                log_state = Some((y, mask));
                zn
            }
            _ => {
                let f = model.drift(b, s, &z, x_t.as_ref())?;
                let inc = b.scale(&f, dt);
                let mut zn = b.add(&z, &inc)?;
                if stochastic {
                    let g = model.diffusion(b, s, &z)?;
                    let dw = noise.step(k);
                    let correction = if milstein { model.milstein_term(b, s, &z, &g)? } else { None };
                    if let Some(gg) = correction {
                        let w = dw.map(|w| 0.5 * (w * w - dt));
                        let c = b.mul_const(&gg, w)?;
                        zn = b.add(&zn, &c)?;
                    }
                    let shock = b.mul_const(&g, dw)?;
                    zn = b.add(&zn, &shock)?;
                }
                zn
            }
        };
        check_explosion(b.value(&next), k + 1, cfg.explosion_threshold)?;
        if cfg.record == Record::All || k + 1 == cfg.n_steps {
            times.push((k + 1) as f64 * dt);
            states.push(next.clone());
        }
        z = next;
    }
    Ok(Trajectory { times, states, euler_fallback })
}

fn check_explosion(z: &Tensor, step: usize, threshold: f64) -> Result<()> {
    let rows: Vec<usize> = (0..z.rows())
        .filter(|&r| {
            let row = z.row(r);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            !(norm <= threshold)
        })
        .collect();
    if rows.is_empty() {
        Ok(())
    } else {
        Err(Error::NumericalExplosion { step, rows })
    }
}
