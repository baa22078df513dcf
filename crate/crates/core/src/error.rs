use std::path::PathBuf;

/// Errors produced by the modelling, simulation and inference routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("out of domain: {0}")]
    OutOfDomain(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("insufficient signal: {0}")]
    InsufficientSignal(String),

    #[error("no convergence after {iterations} iterations (last iterate {last:?}): {reason}")]
    NonConvergence {
        iterations: usize,
        last: Vec<f64>,
        reason: String,
    },

    #[error("site {site}: {source}")]
    Site {
        site: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
