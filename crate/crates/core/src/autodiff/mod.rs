//! Reverse-mode differentiation over dense `f64` arrays, networks, and Adam.

mod adam;
mod backend;
mod gradcheck;
mod mlp;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use backend::{Backend, Eval, Unary};
pub use gradcheck::{analytic_gradient, grad_check, numeric_gradient, relative_error, ScalarFn};
pub use mlp::{dropout_mask, Activation, Dense, Mlp, MlpVars, Mode};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
