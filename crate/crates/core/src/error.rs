use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numeric core and the model built on it.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid tensor shape {shape:?} for {len} elements")]
    Shape { shape: Vec<usize>, len: usize },
    #[error("empty context passed to {0}")]
    EmptyContext(&'static str),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    Rank(Vec<usize>),
    #[error("training diverged: non-finite gradient in parameter `{0}`")]
    Divergence(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

impl Error {
    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
