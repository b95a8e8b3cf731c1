use thiserror::Error;

/// Errors raised by the solvers and diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MuskatError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("non-finite sample {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("integration failed at step {step} (t = {time}), stage {stage}: {reason}")]
    Integration {
        step: usize,
        time: f64,
        stage: usize,
        reason: String,
    },

    #[error("degenerate series: {0}")]
    DegenerateSeries(String),
}

pub type Result<T> = std::result::Result<T, MuskatError>;
