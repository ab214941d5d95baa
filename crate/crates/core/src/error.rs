use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing band {0}")]
    MissingBand(String),

    #[error("missing climate variable {0}")]
    MissingVariable(String),

    #[error("insufficient climate coverage, missing months: {}", .0.join(", "))]
    ClimateCoverage(Vec<String>),

    #[error("empty series")]
    EmptySeries,

    #[error("empty loss support")]
    EmptyLossSupport,

    #[error("unknown region {0:?}")]
    UnknownRegion(String),

    #[error("corrupt or missing field `{field}` in {}", .path.display())]
    CorruptField { path: PathBuf, field: String },

    #[error("checksum mismatch for `{field}` in {}", .path.display())]
    Checksum { path: PathBuf, field: String },

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    #[error("non-finite loss at epoch {epoch}, step {step} (diagnostics in {})", .dump.display())]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        dump: PathBuf,
    },

    #[error("{0}")]
    Undefined(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

#[macro_export]
macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(format!($($arg)*))
    };
}
