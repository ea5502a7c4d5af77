use thiserror::Error;

/// Errors raised by the toolkit. The variants map onto the CLI exit codes:
/// configuration and input problems exit with 2, numeric failures with 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("numeric error at {point:?}: {message}")]
    Numeric { point: Vec<f64>, message: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("convexity violation at x={x:?}, y={y:?}: F={value}")]
    Convexity { x: Vec<f64>, y: Vec<f64>, value: f64 },

    #[error("order fit is not integral (slope {slope}, residual {residual})")]
    Analyticity { slope: f64, residual: f64 },

    #[error("expression error: {0}")]
    Expr(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numeric(point: &[f64], msg: impl Into<String>) -> Self {
        Error::Numeric {
            point: point.to_vec(),
            message: msg.into(),
        }
    }

    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric { .. } | Error::Convexity { .. } | Error::Analyticity { .. } => 3,
            Error::Internal(_) | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 3,
            _ => 2,
        }
    }
}
