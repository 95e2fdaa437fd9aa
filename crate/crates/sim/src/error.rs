use std::io;
use std::path::PathBuf;

use lsw_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
}

impl SimError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> SimError {
        let path = path.into();
        move |source| SimError::Io { path, source }
    }

    /// Process exit status: 1 for configuration and i/o problems, 2 for
    /// numerical blow-up.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Core(CoreError::BlowUp { .. } | CoreError::NonFinite { .. }) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
