use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("unknown variable block {0}")]
    UnknownBlock(usize),
    #[error("block {block} is {found}, expected {expected}")]
    BlockKind {
        block: usize,
        expected: &'static str,
        found: &'static str,
    },
    #[error("index ({row}, {col}) out of range for block of size {size}")]
    IndexOutOfRange { row: usize, col: usize, size: usize },
    #[error("data matrix has size {found}, block has size {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite problem data in {0}")]
    NonFinite(&'static str),
    #[error("PSD block must have positive size")]
    EmptyBlock,
}
