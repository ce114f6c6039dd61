use thiserror::Error;

/// Errors raised by the discretization, the solvers and the dense oracle.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument {
        name: &'static str,
        reason: &'static str,
    },

    #[error("scenario tree of depth {depth} needs {nodes} nodes, above the cap of {cap}")]
    TreeTooLarge {
        depth: usize,
        nodes: u128,
        cap: usize,
    },

    #[error("node at level {level} is a leaf and has no children")]
    LeafNode { level: usize },

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value produced at level {level}")]
    NonFinite { level: usize },

    #[error("observation of the adjoint state is zero")]
    ZeroObservation,

    #[error("{what} did not converge after {iterations} iterations")]
    NotConverged {
        what: &'static str,
        iterations: usize,
    },

    #[error("dense map of {rows} rows exceeds the oracle cap of {cap}")]
    DenseCapExceeded { rows: usize, cap: usize },

    #[error("target is not reachable: relative residual {relative_residual:e}")]
    Unreachable { relative_residual: f64 },

    #[error("could not bracket the optimal time: {reason}")]
    BracketNotFound { reason: &'static str },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            what,
            expected,
            actual,
        })
    }
}
