use thiserror::Error;

/// Errors raised by the laboratory. Statistical failures are never errors;
/// they are recorded in reports.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported derivative order {order:?} (max total order {max})")]
    Order { order: [u8; 2], max: u8 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("out of bounds: {0}")]
    Bounds(String),

    #[error("unknown component id {0}")]
    UnknownComponent(u32),

    #[error("level {level} outside sampled support [{lo}, {hi}]")]
    Support { level: f64, lo: f64, hi: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
