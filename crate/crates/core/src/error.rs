use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("game `{0}` has no potential function")]
    NoPotential(String),

    #[error("game `{0}` is not affine; exact enumeration needs the declarative form")]
    NotAffine(String),

    #[error("operation requires an undirected network (symmetric weights)")]
    DirectedNetwork,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("integration aborted at t = {time}: {reason}")]
    IntegrationAbort { time: f64, reason: String },

    #[error("grid of {points} points exceeds the limit of {limit}")]
    GridTooLarge { points: u128, limit: u128 },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}
