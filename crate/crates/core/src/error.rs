use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// A caller supplied an argument outside an operation's domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A configuration that cannot be executed (for example a decoy check with no decoys).
    #[error("configuration error: {0}")]
    Config(String),
    /// The requested attack does not apply to the given protocol run.
    #[error("attack not applicable: {0}")]
    NotApplicable(String),
    /// A broken internal invariant, such as renormalizing a zero-probability branch.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
