use thiserror::Error;

/// Errors raised anywhere in the transport pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("singular matrix in {context} at step {step}")]
    Singular { context: &'static str, step: usize },

    #[error("{method} did not converge after {iters} iterations (last update {last_update:.3e})")]
    NotConverged {
        method: &'static str,
        iters: usize,
        last_update: f64,
    },

    #[error("spectral radius estimate {rho:.6} >= 1; use the eigen_direct or kron_oracle method")]
    SpectralRadius { rho: f64 },

    #[error("grouping mismatch: {0}")]
    Grouping(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("communicator failure: {0}")]
    Comm(String),

    #[error("parse error in {path} (line {line}): {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("SCBA diverged at iteration {iteration}: residual {residual:.3e} grew from {earlier:.3e}")]
    Diverged {
        iteration: usize,
        residual: f64,
        earlier: f64,
    },

    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Reads a text file, naming it in the error.
pub fn read_text(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::File { path: path.display().to_string(), source })
}
