//! Closed-form test predictors with known chain limits.
//!
//! An oracle predictor is built from a target latent: its noise estimate is
//! exactly the residual between the input and the noised target, so the
//! clean-latent prediction at every schedule index equals the target and a
//! deterministic chain provably converges there. The anchored variant scales
//! the estimate by a strength in (0, 1], pulling the prediction only part of
//! the way toward the target per step; this leaves room for cross-view
//! coupling to act, which pure oracles (that erase all per-step state) hide.

use std::sync::Arc;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::geometry::{Mesh, TexelTable};
use crate::models::{LatentCodec, NoisePredictor, PromptEmbedding};
use crate::render::{self, Camera, DepthMap, BACKGROUND};
use crate::schedule::{LatentGrid, NoiseSchedule};

/// Predictor anchored to a fixed target latent.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    alpha_bars: Vec<f64>,
    target: LatentGrid,
    strength: f64,
}

impl OraclePredictor {
    /// Pure oracle: the clean-latent prediction equals `target` at every
    /// schedule index.
    pub fn new(schedule: &NoiseSchedule, target: LatentGrid) -> Self {
        Self::anchored(schedule, target, 1.0)
    }

    /// Partially anchored oracle with re-targeting strength in (0, 1]:
    /// the clean-latent prediction is `(1−s)·z_t/√ᾱ_t + s·target`. Strength
    /// 1 is the pure oracle.
    pub fn anchored(schedule: &NoiseSchedule, target: LatentGrid, strength: f64) -> Self {
        Self {
            alpha_bars: (0..schedule.train_steps()).map(|t| schedule.alpha_bar(t)).collect(),
            target,
            strength,
        }
    }

    /// The latent this predictor steers toward.
    pub fn target(&self) -> &LatentGrid {
        &self.target
    }
}

impl NoisePredictor for OraclePredictor {
    fn latent_shape(&self) -> (usize, usize, usize) {
        self.target.dim()
    }

    fn predict(
        &self,
        z_t: &LatentGrid,
        t: usize,
        _depth: &DepthMap,
        _prompt: &PromptEmbedding,
        _guidance_weight: f64,
    ) -> Result<LatentGrid> {
        if z_t.dim() != self.target.dim() {
            return Err(Error::ShapeMismatch(format!(
                "oracle target is {:?}, latent is {:?}",
                self.target.dim(),
                z_t.dim()
            )));
        }
        let ab = *self.alpha_bars.get(t).ok_or_else(|| {
            Error::Backend(format!("schedule index {t} out of range"))
        })?;
        let rem = (1.0 - ab).sqrt();
        if rem == 0.0 {
            // At ᾱ = 1 the noise component is undefined; report none.
            return Ok(Array3::zeros(z_t.dim()));
        }
        Ok((z_t - &(&self.target * ab.sqrt())) * (self.strength / rem))
    }
}

/// One oracle per camera, each anchored to the encoded render of a known
/// ground-truth texture: view i's target is `encode(render(texture, cam_i))`.
pub fn view_oracle_predictors(
    schedule: &NoiseSchedule,
    codec: &dyn LatentCodec,
    target_texture: &Array3<f64>,
    mesh: &Mesh,
    table: &TexelTable,
    cameras: &[Camera],
    strength: f64,
) -> Result<Vec<Arc<dyn NoisePredictor>>> {
    cameras
        .iter()
        .map(|cam| {
            let img = render::render_grid(mesh, target_texture, table, cam, &[BACKGROUND; 3])?;
            let z0 = codec.encode(&img)?;
            Ok(Arc::new(OraclePredictor::anchored(schedule, z0, strength))
                as Arc<dyn NoisePredictor>)
        })
        .collect()
}
