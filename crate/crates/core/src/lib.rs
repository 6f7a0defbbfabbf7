//! Stable neural stochastic differential equations for irregular time series.
//!
//! Three model classes keep the SDE well posed by construction: a
//! Langevin-type model with additive noise, a linear-noise model with
//! multiplicative noise, and a geometric model integrated in log space.
//! Each drift sees the data through a controlled path built from the
//! observations.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod model;
pub mod path;
pub mod seed;
pub mod solver;
pub mod stability;
pub mod train;

pub use error::{Error, Result};
