use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid configuration: {field} {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("failed to parse configuration: {0}")]
    Parse(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{0}")]
    Unsupported(String),
    #[error("{what} is not unit norm (norm {norm})")]
    NotUnitNorm { what: &'static str, norm: f64 },
    #[error("energy split violated at element {index}: |u_t|^2 + |u_r|^2 = {total}")]
    EnergySplit { index: usize, total: f64 },
    #[error(
        "conic subproblem {what} ended with status {status} (equality residual {residual:.2e})"
    )]
    Subproblem {
        what: &'static str,
        status: String,
        residual: f64,
    },
    #[error("conic model error: {0}")]
    Conic(#[from] surveil_conic::ConicError),
    #[error("{0}")]
    Empty(&'static str),
    #[error("failed to write output: {0}")]
    Output(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
