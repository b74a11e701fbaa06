//! Random-phase Gaussian wave splatting.
//!
//! Gaussian-splat scenes are converted into time-multiplexed computer-generated
//! holograms by angular-spectrum propagation and wave-domain alpha compositing,
//! then reconstructed as focal stacks and light fields for analysis.

pub mod error;
pub mod exec;
pub mod field;
pub mod propagation;
pub mod rng;
pub mod spectral;
pub mod splat;
pub mod wavefront;
pub mod compositor;
pub mod reconstruct;
pub mod metrics;
pub mod analysis;
pub mod encode;

pub use error::{Error, Result};
pub use exec::Execution;
pub use field::{OpticsConfig, SpectrumField, WaveField};
pub use propagation::{BandLimit, Propagator};
