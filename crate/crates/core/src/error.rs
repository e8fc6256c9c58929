use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("resource cap exceeded: {what} needs {requested}, cap is {cap} (raise `{flag}`)")]
    ResourceCap {
        what: &'static str,
        requested: usize,
        cap: usize,
        flag: &'static str,
    },

    #[error("level graph is disconnected ({components} components); increase the cone cutoff theta (currently {theta})")]
    Disconnected { components: usize, theta: f64 },

    #[error("power iteration did not reach residual {tol:e} after {iterations} iterations; residual history: {history:?}")]
    NonConvergence {
        tol: f64,
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Process exit code for the CLI: 1 usage, 2 resource cap, 3 invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Parse { .. } | Error::Io(_) => 1,
            Error::ResourceCap { .. } => 2,
            Error::Disconnected { .. }
            | Error::NonConvergence { .. }
            | Error::Data(_)
            | Error::Invariant(_) => 3,
        }
    }
}
