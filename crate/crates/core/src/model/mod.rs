//! Drift and diffusion fields for every model kind.

mod checkpoint;
mod encoding;
pub mod presets;
mod sde;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use encoding::time_encoding;
pub use sde::{BoundModel, DiffusionForm, ModelConfig, ModelKind, SdeModel, SigmaNet};
