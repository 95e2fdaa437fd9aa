use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("lattice radius mismatch: {left} vs {right}")]
    RadiusMismatch { left: usize, right: usize },

    #[error("expected {expected} sites, got {actual}")]
    Length { expected: usize, actual: usize },

    #[error("non-finite value at site {site}")]
    NonFinite { site: i64 },

    #[error("dissipativity violated: {0}")]
    Dissipativity(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical blow-up on path {path} at step {step}")]
    BlowUp { path: u64, step: u64 },

    #[error("radius {radius} exceeds the dense limit {limit}")]
    TooLarge { radius: usize, limit: usize },

    #[error("ensemble paths do not share a time grid")]
    GridMismatch,

    #[error("ensemble is empty")]
    EmptyEnsemble,

    #[error("observable lists differ")]
    ObservableMismatch,

    #[error("missing record: {0}")]
    MissingRecord(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
