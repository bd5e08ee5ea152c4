//! Multi-view-consistent texture synthesis for UV-mapped triangle meshes.
//!
//! The library runs one denoising diffusion chain per camera view and couples
//! the chains through a shared texture: at every step the per-view noiseless
//! predictions are decoded to color images, fused into a single texture using
//! visibility-weighted averaging, and each view's latent is re-optimized so
//! that its decoded image matches a render of that fused texture. Denoisers
//! and latent codecs are pluggable, so the full mechanism can be exercised
//! end-to-end with small deterministic test backends.
//!
//! Module map:
//! - [`geometry`]: mesh loading, normalization, UV texel tables, test assets
//! - [`render`]: cameras, software rasterization, depth and visibility
//! - [`schedule`]: noise schedules and DDIM/DDPM sampling steps
//! - [`models`]: denoiser and codec interfaces plus test backends
//! - [`fusion`]: view weighting, color fusion, latent re-optimization
//! - [`optim`]: first-party AdamW / SGD and L1 objectives
//! - [`pipeline`]: the end-to-end synthesis loop, ablations, and reports
//! - [`config`]: run configuration, presets, and the key=value config format
//! - [`patterns`]: analytic target textures for oracles and self-checks
//! - [`io`]: PNG and plain-text artifact input/output

pub mod config;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod models;
pub mod optim;
pub mod patterns;
pub mod pipeline;
pub mod render;
pub mod schedule;

pub use error::{Error, Result};
