use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("loss must be a scalar, got {0} elements")]
    NonScalarLoss(usize),
    #[error("non-finite gradient for parameter {0}")]
    AbortNonFinite(usize),
    #[error("channel {channel} of sample has no observations")]
    EmptyChannel { channel: usize },
    #[error("a controlled path needs at least two knots, got {0}")]
    TooFewKnots(usize),
    #[error("gsde state has a negative component ({value}) at index {index}")]
    NegativeStateGsde { index: usize, value: f64 },
    #[error("numerical explosion at step {step} in rows {rows:?}")]
    NumericalExplosion { step: usize, rows: Vec<usize> },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("AUROC is only defined for binary tasks, got {0} classes")]
    AurocNotBinary(usize),
    #[error("training aborted: {0}")]
    TrainingAborted(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by the numerics rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NumericalExplosion { .. } | Error::AbortNonFinite(_) | Error::TrainingAborted(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
