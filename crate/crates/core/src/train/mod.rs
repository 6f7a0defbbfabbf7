//! Splitting, losses, metrics and the training loop.

mod gradcheck;
mod metrics;
mod split;
mod trainer;

pub use gradcheck::{gradient_suite, model_grad_check, GradReport};
pub use metrics::{accuracy, argmax, auroc, cross_entropy, masked_mse, softmax_rows};
pub use split::{split, Split};
pub use trainer::{
    evaluate, predict, train, validation_seed, EpochRecord, Metrics, Predictions, Prepared, Target, Task, TrainConfig,
    TrainHistory, TrainOutcome, ABORT_AFTER_BATCHES,
};
