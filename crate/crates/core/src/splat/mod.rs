//! Gaussian splat ingestion: PLY parsing, storage activations, hologram-space
//! mapping and depth ordering.

pub mod ply;
mod scene;

pub use ply::{encode_ascii, encode_binary, load_ply, PlyError, RawSplat};
pub use scene::{
    activate, sort_and_bin, to_hologram_space, ColorDomain, DepthLayer, DepthOrder, GaussianPrimitive, HologramScene,
    SceneMapping, SH_C0,
};
