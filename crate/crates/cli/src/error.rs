use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Core(#[from] wavesplat_core::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, reason: impl Into<String>) -> Self {
        CliError::Format {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    /// Process exit code: 2 config, 3 input/output, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        use wavesplat_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Format { .. } => 3,
            CliError::Core(e) => match e {
                E::InvalidOptics(_)
                | E::InvalidChannel(_)
                | E::InvalidArgument(_)
                | E::EmptyScene
                | E::DegenerateMapping(_)
                | E::EmptyKernel(_)
                | E::UnsupportedHarmonic { .. }
                | E::ShapeMismatch { .. } => 2,
                E::Ply(_) => 3,
                E::NonFinite(_) | E::ZeroEnergy | E::Diverged { .. } => 4,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
