use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is singular to working precision")]
    Singular,

    #[error("singular value decomposition failed to converge")]
    SvdNoConvergence,

    #[error("qubit {qubit} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },

    #[error("cost denominator {0:e} is degenerate (A|x> vanishes)")]
    DegenerateCost(f64),

    #[error("{padding} of {shots} shots landed on padding indices")]
    PaddingMass { padding: usize, shots: usize },

    #[error("probability {0} on padding indices")]
    PaddingProbability(f64),

    #[error("policy iteration did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
