use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("partition must contain at least one block")]
    EmptyPartition,
    #[error("partition block {block} has size zero")]
    EmptyBlock { block: usize },
    #[error("partition covers {covered} columns but the matrix has {columns}")]
    PartitionMismatch { covered: usize, columns: usize },
    #[error("{what}: expected {expected:?}, found {found:?}")]
    DimensionMismatch { what: &'static str, expected: (usize, usize), found: (usize, usize) },
    #[error("{what} index {index} out of range (limit {limit})")]
    IndexOutOfRange { what: &'static str, index: usize, limit: usize },
    #[error("matrix must be square, found {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("{what} contains a non-finite value")]
    NonFinite { what: &'static str },
    #[error("{what} must be strictly positive, found {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("{what} must be nonnegative, found {value}")]
    Negative { what: &'static str, value: f64 },
    #[error("need at least as many inputs as outputs (m = {outputs}, n = {inputs})")]
    TooFewInputs { outputs: usize, inputs: usize },
    #[error("no certificate for squared matrix with rank {rank}")]
    MissingCertificate { rank: usize },
    #[error("gain product in block {block}, offset {offset} is zero; reduce the active set first")]
    ZeroGain { block: usize, offset: usize },
    #[error("plant state matrix is not Hurwitz (max real part {max_real})")]
    NotHurwitz { max_real: f64 },
    #[error("plant must have at least one state")]
    StaticPlant,
    #[error("matrix is singular")]
    Singular,
    #[error("eigenvalue iteration did not converge")]
    EigenFailure,
    #[error("{what} is empty")]
    Empty { what: &'static str },
    #[error("weight construction overflowed the floating point range")]
    Overflow,
}
