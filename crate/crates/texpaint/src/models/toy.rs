//! A small fixed-weight noise predictor for non-oracle pipeline runs.
//!
//! Each latent cell is mapped through a tiny two-layer network whose inputs
//! are the cell's latent values, a sinusoidal embedding of the schedule
//! index, summary statistics of the depth patch under the cell, and two
//! projections of the prompt embedding. Weights are drawn once from a seed,
//! so the predictor is a pure function; the squashed output keeps it
//! Lipschitz and bounded. Guidance blends the prompted prediction with the
//! null-prompt prediction linearly.

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::models::{NoisePredictor, PromptEmbedding, PROMPT_DIM};
use crate::render::DepthMap;
use crate::schedule::LatentGrid;

const HIDDEN: usize = 16;
/// Extra features besides the latent cell: t (2), depth (2), prompt (2).
const SIDE_FEATURES: usize = 6;
/// Output squash scale; bounds the prediction to ±OUTPUT_SCALE.
const OUTPUT_SCALE: f64 = 2.0;

/// Deterministic seeded test predictor.
#[derive(Debug, Clone)]
pub struct ToyDenoiser {
    latent_shape: (usize, usize, usize),
    w1: Vec<f64>, // HIDDEN × in_dim, row-major
    b1: Vec<f64>,
    w2: Vec<f64>, // lc × HIDDEN, row-major
    b2: Vec<f64>,
    prompt_proj: Vec<f64>, // 2 × PROMPT_DIM
    seed: u64,
}

impl ToyDenoiser {
    /// Builds the network for one latent shape; same seed, same weights.
    pub fn new(seed: u64, latent_shape: (usize, usize, usize)) -> Self {
        let lc = latent_shape.2;
        let in_dim = lc + SIDE_FEATURES;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize, scale: f64| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(&mut rng);
                    v * scale
                })
                .collect()
        };
        let w1 = draw(HIDDEN * in_dim, 1.0 / (in_dim as f64).sqrt());
        let b1 = draw(HIDDEN, 0.1);
        let w2 = draw(lc * HIDDEN, 1.0 / (HIDDEN as f64).sqrt());
        let b2 = draw(lc, 0.1);
        let prompt_proj = draw(2 * PROMPT_DIM, 1.0 / (PROMPT_DIM as f64).sqrt());
        Self {
            latent_shape,
            w1,
            b1,
            w2,
            b2,
            prompt_proj,
            seed,
        }
    }

    /// Prediction for a fixed prompt (no guidance blending).
    fn forward(
        &self,
        z_t: &LatentGrid,
        t: usize,
        depth: &DepthMap,
        prompt: &PromptEmbedding,
    ) -> LatentGrid {
        let (lh, lw, lc) = self.latent_shape;
        let in_dim = lc + SIDE_FEATURES;
        let ts = t as f64;
        let t_feat = [(0.01 * ts).sin(), (0.01 * ts).cos()];
        let p_feat = [
            self.project_prompt(prompt, 0).tanh(),
            self.project_prompt(prompt, 1).tanh(),
        ];
        let (dh, dw) = (depth.height(), depth.width());
        let mut out = LatentGrid::zeros(self.latent_shape);
        let mut feat = vec![0.0; in_dim];
        for ly in 0..lh {
            for lx in 0..lw {
                for k in 0..lc {
                    feat[k] = z_t[[ly, lx, k]];
                }
                let (dm, df) = depth_patch_stats(depth, ly, lx, lh, lw, dh, dw);
                feat[lc] = t_feat[0];
                feat[lc + 1] = t_feat[1];
                feat[lc + 2] = dm;
                feat[lc + 3] = df;
                feat[lc + 4] = p_feat[0];
                feat[lc + 5] = p_feat[1];
                let mut hidden = [0.0; HIDDEN];
                for (j, h) in hidden.iter_mut().enumerate() {
                    let mut acc = self.b1[j];
                    for (i, f) in feat.iter().enumerate() {
                        acc += self.w1[j * in_dim + i] * f;
                    }
                    *h = acc.tanh();
                }
                for k in 0..lc {
                    let mut acc = self.b2[k];
                    for (j, h) in hidden.iter().enumerate() {
                        acc += self.w2[k * HIDDEN + j] * h;
                    }
                    out[[ly, lx, k]] = OUTPUT_SCALE * acc.tanh();
                }
            }
        }
        out
    }

    fn project_prompt(&self, prompt: &PromptEmbedding, row: usize) -> f64 {
        prompt
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| self.prompt_proj[row * PROMPT_DIM + i] * v)
            .sum()
    }

    /// Plain-text dump of all weights for inspection (one value per line
    /// after a shape header).
    pub fn dump_weights(&self) -> String {
        let (lh, lw, lc) = self.latent_shape;
        let mut s = format!(
            "toy-denoiser seed={} latent={}x{}x{} hidden={}\n",
            self.seed, lh, lw, lc, HIDDEN
        );
        for (name, vals) in [
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("prompt_proj", &self.prompt_proj),
        ] {
            s.push_str(&format!("[{name}] {}\n", vals.len()));
            for v in vals.iter() {
                s.push_str(&format!("{v:.17e}\n"));
            }
        }
        s
    }
}

/// Mean mapped depth and hit fraction over the image patch under latent cell
/// `(ly, lx)`. Distances map through `1/(1+d)` so the feature is bounded;
/// misses contribute zero.
fn depth_patch_stats(
    depth: &DepthMap,
    ly: usize,
    lx: usize,
    lh: usize,
    lw: usize,
    dh: usize,
    dw: usize,
) -> (f64, f64) {
    let y0 = ly * dh / lh;
    let y1 = ((ly + 1) * dh / lh).max(y0 + 1).min(dh);
    let x0 = lx * dw / lw;
    let x1 = ((lx + 1) * dw / lw).max(x0 + 1).min(dw);
    let mut sum = 0.0;
    let mut hits = 0usize;
    let mut count = 0usize;
    for y in y0..y1 {
        for x in x0..x1 {
            let d = depth.dist[[y, x]];
            if d.is_finite() {
                sum += 1.0 / (1.0 + d);
                hits += 1;
            }
            count += 1;
        }
    }
    (sum / count as f64, hits as f64 / count as f64)
}

impl NoisePredictor for ToyDenoiser {
    fn latent_shape(&self) -> (usize, usize, usize) {
        self.latent_shape
    }

    fn predict(
        &self,
        z_t: &LatentGrid,
        t: usize,
        depth: &DepthMap,
        prompt: &PromptEmbedding,
        guidance_weight: f64,
    ) -> Result<LatentGrid> {
        if z_t.dim() != self.latent_shape {
            return Err(Error::ShapeMismatch(format!(
                "toy predictor expects latent {:?}, got {:?}",
                self.latent_shape,
                z_t.dim()
            )));
        }
        let cond = self.forward(z_t, t, depth, prompt);
        if guidance_weight == 1.0 {
            return Ok(cond);
        }
        let uncond = self.forward(z_t, t, depth, &PromptEmbedding::null());
        Ok(&uncond + &((cond - &uncond) * guidance_weight))
    }
}
