use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the forecasting pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {dimension} expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        dimension: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("degenerate {quantity} range: min {min} and max {max} must differ")]
    Degenerate {
        quantity: &'static str,
        min: f64,
        max: f64,
    },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("corrupt bundle: {0}")]
    CorruptBundle(String),
    #[error("bundle format version {found} is not supported (expected {expected})")]
    BundleVersion { found: u32, expected: u32 },
    #[error("bundle has no normalization parameters; predictions cannot be denormalized")]
    MissingNormalization,
    #[error("stale cache: {0}")]
    StaleCache(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        dimension: &'static str,
        expected: usize,
        actual: usize,
    ) -> Self {
        Error::Shape {
            context,
            dimension,
            expected,
            actual,
        }
    }

    /// True for failures caused by input data rather than arithmetic.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Data(_)
                | Error::Degenerate { .. }
                | Error::CorruptBundle(_)
                | Error::BundleVersion { .. }
                | Error::MissingNormalization
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}

pub(crate) fn ensure_dim(
    context: &'static str,
    dimension: &'static str,
    expected: usize,
    actual: usize,
) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::shape(context, dimension, expected, actual))
    }
}
