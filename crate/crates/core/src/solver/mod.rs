//! Seeded Brownian noise and fixed-step Euler–Maruyama / Milstein solvers.
//!
//! Solves are written against [`Backend`](crate::autodiff::Backend), so the
//! same rollout is either recorded for backpropagation or run eagerly.

mod brownian;
mod convergence;
mod oracles;
mod solve;

pub use brownian::{BatchNoise, BrownianGrid};
pub use convergence::{log_log_slope, ode_error, strong_error, ConvergenceReport, GbmParams};
pub use oracles::{gbm_oracle, ou_oracle, GbmOracleReport, OuOracleReport};
pub use solve::{initial_inputs, solve, solve_from, Record, Scheme, SolveConfig, Trajectory};
