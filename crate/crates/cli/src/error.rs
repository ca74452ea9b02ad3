use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Core(#[from] udsgd_core::Error),
}

impl LabError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), message: e.to_string() }
    }

    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        use udsgd_core::Error as E;
        match self {
            Self::Config(_) | Self::Core(E::Config(_)) => 2,
            Self::Io { .. } => 3,
            Self::Core(E::Parse { .. } | E::EmptyDataset | E::InsufficientData { .. }) => 4,
            Self::Core(E::Divergence { .. } | E::NonConvergence { .. }) => 5,
            Self::Core(E::NotHurwitz { .. } | E::NotPositiveDefinite(_) | E::Singular | E::NonErgodic(_)) => 6,
            Self::Core(_) => 7,
        }
    }
}
