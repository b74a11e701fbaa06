use thiserror::Error;

use crate::splat::ply::PlyError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid optics configuration: {0}")]
    InvalidOptics(String),

    #[error("channel index {0} out of range (expected 0, 1 or 2)")]
    InvalidChannel(usize),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty scene")]
    EmptyScene,

    #[error("degenerate mapping: {0}")]
    DegenerateMapping(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("field has zero energy")]
    ZeroEnergy,

    #[error("kernel has empty support: {0}")]
    EmptyKernel(String),

    #[error("unsupported spherical harmonic degree/order (l={l}, m={m})")]
    UnsupportedHarmonic { l: i32, m: i32 },

    #[error("optimization diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error(transparent)]
    Ply(#[from] PlyError),
}
