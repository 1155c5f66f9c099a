use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value produced by {op}")]
    Numeric { op: &'static str },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("could not generate a connected maze (n={n}, p={p}, seed={seed}) after {retries} retries")]
    Generation {
        n: usize,
        p: f64,
        seed: u64,
        retries: usize,
    },

    #[error("goal {goal} is unreachable from start {start}")]
    Unreachable { start: usize, goal: usize },

    #[error("parse error at byte {offset} (field `{path}`): {message}")]
    Parse {
        offset: usize,
        path: String,
        message: String,
    },

    #[error("oracle enumeration exceeded limit of {limit} paths")]
    OracleScale { limit: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("training diverged at epoch {epoch} (loss {loss}); try a smaller learning rate")]
    Divergence { epoch: usize, loss: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
