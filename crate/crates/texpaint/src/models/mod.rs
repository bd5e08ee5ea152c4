//! Pluggable generative backends.
//!
//! The denoising pipeline is written against two small interfaces: a
//! [`NoisePredictor`] that estimates the noise component of a latent at a
//! given schedule index (conditioned on a depth map and a prompt embedding),
//! and a [`LatentCodec`] that maps latents to color images and transports
//! gradients back through the decoder. Concrete desk-scale backends live in
//! the submodules: closed-form oracle predictors whose chains provably
//! converge to a known target, seeded affine/nonlinear codecs with exact
//! adjoints, and a small fixed-weight network for exercising the pipeline
//! with a non-trivial backend.

pub mod codec;
pub mod oracle;
pub mod toy;

pub use codec::{AffineCodec, CodecNonlinearity, IdentityCodec};
pub use oracle::{view_oracle_predictors, OraclePredictor};
pub use toy::ToyDenoiser;

use ndarray::Array3;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::render::DepthMap;
use crate::schedule::LatentGrid;

/// Dimension of every prompt embedding.
pub const PROMPT_DIM: usize = 32;

/// A fixed-length conditioning vector derived deterministically from a
/// prompt string.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptEmbedding {
    values: Vec<f64>,
}

impl PromptEmbedding {
    /// Embeds a prompt: the string is hashed to a seed, the seed drives a
    /// Gaussian draw, and the draw is normalized. Same string, same vector;
    /// every text embedding has unit norm.
    pub fn from_text(text: &str) -> Self {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(fnv1a(text.as_bytes()));
        let mut values: Vec<f64> = (0..PROMPT_DIM)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut values {
            *v /= norm;
        }
        Self { values }
    }

    /// The unconditional ("no prompt") embedding, all zeros. Predictors
    /// blend toward this under classifier-free guidance.
    pub fn null() -> Self {
        Self {
            values: vec![0.0; PROMPT_DIM],
        }
    }

    /// The embedding vector.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// 64-bit FNV-1a hash; fixed across platforms and runs.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Estimates the noise component of a latent at schedule index `t`.
///
/// Implementations must be deterministic functions of their inputs and
/// return a grid of the same shape as the input latent.
pub trait NoisePredictor: Send + Sync {
    /// Latent shape `(h, w, c)` this predictor operates on.
    fn latent_shape(&self) -> (usize, usize, usize);

    /// Predicted noise for latent `z_t` at schedule index `t`, conditioned
    /// on the view's depth map and a prompt embedding. `guidance_weight`
    /// linearly blends the conditional prediction against the unconditional
    /// one (weight 1 = conditional only); backends without a notion of
    /// conditioning may ignore it.
    fn predict(
        &self,
        z_t: &LatentGrid,
        t: usize,
        depth: &DepthMap,
        prompt: &PromptEmbedding,
        guidance_weight: f64,
    ) -> Result<LatentGrid>;
}

/// Maps latents to color images and back.
///
/// `decode_vjp` must be the exact transpose-Jacobian action of `decode`:
/// optimization in this crate differentiates through the decoder only, never
/// through the rasterizer.
pub trait LatentCodec: Send + Sync {
    /// Latent shape `(h, w, c)`.
    fn latent_shape(&self) -> (usize, usize, usize);

    /// Decoded image shape `(h, w, 3)`.
    fn image_shape(&self) -> (usize, usize, usize);

    /// Decodes a latent into an RGB image grid.
    fn decode(&self, z: &LatentGrid) -> Result<Array3<f64>>;

    /// Pulls an image-space cotangent back to latent space: returns
    /// `J_decode(z)^T · cotangent`.
    fn decode_vjp(&self, z: &LatentGrid, cotangent: &Array3<f64>) -> Result<LatentGrid>;

    /// Encodes an image into a latent. Exact inverse of `decode` where one
    /// exists; otherwise a least-squares/iterative approximation.
    fn encode(&self, image: &Array3<f64>) -> Result<LatentGrid>;
}
