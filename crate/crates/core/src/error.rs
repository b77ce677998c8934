use thiserror::Error;

use crate::dispersion::Wave;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("empty model ensemble")]
    EmptyEnsemble,

    #[error("secular function is singular at c = {c} km/s (layer velocity)")]
    EvaluationSingularity { c: f64 },

    #[error("no {wave} root found at period {period} s")]
    NoRoot { wave: Wave, period: f64 },

    #[error("kernel evaluation failed at period index {period_index}, layer {layer}: {source}")]
    KernelEvaluation {
        period_index: usize,
        layer: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 4,
            Error::EvaluationSingularity { .. }
            | Error::NoRoot { .. }
            | Error::KernelEvaluation { .. }
            | Error::Normalization(_)
            | Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
