use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("design matrix has rank zero")]
    RankZero,

    #[error("closed form unavailable for {method} at argument {argument}; use the iterative path")]
    ClosedFormUnavailable { method: &'static str, argument: f64 },

    #[error("iteration diverged at step {step} (residual {residual:e}); step size too large")]
    Divergence { step: usize, residual: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Input(_) => "input",
            Error::RankZero => "rank_zero",
            Error::ClosedFormUnavailable { .. } => "closed_form_unavailable",
            Error::Divergence { .. } => "divergence",
            Error::Contract(_) => "contract",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}
