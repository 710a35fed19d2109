use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The input to classical MDS has negative leading eigenvalues.
    #[error("input is not a Euclidean distance matrix: {0}")]
    NotEdm(String),

    /// Some point has fewer positively weighted pairs than the dimension requires.
    #[error("under-constrained problem: point {point} has {degree} weighted pairs, needs {required}")]
    UnderConstrained {
        point: usize,
        degree: usize,
        required: usize,
    },
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
