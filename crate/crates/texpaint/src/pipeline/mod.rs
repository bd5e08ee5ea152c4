//! End-to-end texture synthesis: N parallel denoising chains, one per
//! camera, coupled at every step by color-space fusion and latent
//! re-optimization.
//!
//! Per visited timestep, from the noisiest down: each chain predicts its
//! noise, forms a clean-latent estimate, and decodes it; the decoded views
//! are fused into a texture; at the lowest timestep that fused texture is
//! the raw output, otherwise each chain's latent is re-optimized toward its
//! view's render of the fused texture and re-noised to the next timestep
//! using the *old* noise prediction. A separate SGD pass then reconstructs a
//! refined texture directly from the final decoded views. Alternative
//! coupling modes (latent blending, ancestral sampling over noisy decodes,
//! direct re-encoding, or none at all) exist for ablation comparisons.

use std::sync::Arc;

use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::{
    blend_latent_texture, compute_view_weights, fuse_color, joint_optimize,
    optimize_latents_against, JointOptConfig, LatentOptConfig, Texture, WeightField,
};
use crate::geometry::{build_texel_table, Mesh, TexelTable};
use crate::models::{LatentCodec, NoisePredictor, PromptEmbedding};
use crate::render::{
    rasterize, render_grid_with_map, texel_map, Camera, DepthMap, ImageView, RasterFrame,
    BACKGROUND,
};
use crate::schedule::{
    ddim_predict_z0, ddim_step_from_clean, ddpm_step, sample_standard_normal, LatentStack,
    NoiseSchedule,
};

/// How the per-view chains are coupled between denoising steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Color-space fusion of clean decodes plus latent re-optimization.
    Main,
    /// Weighted averaging applied directly to the latent grids (no
    /// optimization); comparison baseline.
    LatentBlend,
    /// Ancestral (DDPM) sampling, fusing decodes of the still-noisy
    /// latents; comparison baseline.
    DdpmFusion,
    /// Fusion as in the main mode, but latents are re-encoded from the
    /// fused renders instead of optimized; comparison baseline.
    DirectEncode,
    /// No coupling at all: independent chains, fused only once at the end;
    /// comparison baseline.
    Independent,
}

impl FusionMode {
    /// Parses a mode name as used by configs and the CLI.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "main" => Ok(Self::Main),
            "latent-blend" => Ok(Self::LatentBlend),
            "ddpm-fusion" => Ok(Self::DdpmFusion),
            "direct-encode" => Ok(Self::DirectEncode),
            "independent" => Ok(Self::Independent),
            other => Err(Error::Config(format!(
                "unknown fusion mode `{other}` (expected main|latent-blend|ddpm-fusion|direct-encode|independent)"
            ))),
        }
    }

    /// Canonical name of the mode.
    pub fn name(self) -> &'static str {
        match self {
            Self::Main => "main",
            Self::LatentBlend => "latent-blend",
            Self::DdpmFusion => "ddpm-fusion",
            Self::DirectEncode => "direct-encode",
            Self::Independent => "independent",
        }
    }
}

/// Geometry and visibility products that are constants of a run: computed
/// once, shared by every timestep.
pub struct Scene {
    /// The mesh being textured.
    pub mesh: Mesh,
    /// Texel table at texture resolution.
    pub table: TexelTable,
    /// Image-resolution cameras, one chain each.
    pub cameras: Vec<Camera>,
    /// Rasterization (depth + UV) per camera.
    pub frames: Vec<RasterFrame>,
    /// Pixel-to-texel correspondence per camera at texture resolution.
    pub maps: Vec<Array2<i64>>,
    /// Cosine view weights and projected pixels at texture resolution.
    pub weights: WeightField,
    /// Texel table for the latent-resolution texture (latent-blend mode).
    pub latent_table: TexelTable,
    /// Same camera poses at latent resolution.
    pub latent_cameras: Vec<Camera>,
    /// Latent-resolution weights.
    pub latent_weights: WeightField,
    /// Latent pixel-to-latent-texel correspondence per camera.
    pub latent_maps: Vec<Array2<i64>>,
}

impl Scene {
    /// Rasterizes the mesh for every camera and precomputes the weight
    /// fields at texture and latent resolution. `latent_spatial` is the
    /// codec's latent grid size as `(height, width)`.
    pub fn build(
        mesh: Mesh,
        cameras: Vec<Camera>,
        texture_size: (usize, usize),
        latent_spatial: (usize, usize),
    ) -> Result<Self> {
        if cameras.is_empty() {
            return Err(Error::Config("at least one camera is required".into()));
        }
        let table = build_texel_table(&mesh, texture_size)?;
        let frames: Vec<RasterFrame> = cameras
            .par_iter()
            .map(|c| rasterize(&mesh, c))
            .collect::<Result<_>>()?;
        let maps: Vec<Array2<i64>> = frames.iter().map(|f| texel_map(f, &table)).collect();
        let depths: Vec<DepthMap> = frames.iter().map(|f| f.depth.clone()).collect();
        let weights = compute_view_weights(&table, &cameras, &depths)?;

        let (lh, lw) = latent_spatial;
        let (iw, ih) = (cameras[0].width, cameras[0].height);
        // The latent texture scales with the latent/image resolution ratio.
        let lt_w = (texture_size.0 * lw / iw).max(1);
        let lt_h = (texture_size.1 * lh / ih).max(1);
        let latent_table = build_texel_table(&mesh, (lt_w, lt_h))?;
        let latent_cameras: Vec<Camera> = cameras
            .iter()
            .map(|c| Camera {
                width: lw,
                height: lh,
                ..c.clone()
            })
            .collect();
        let latent_frames: Vec<RasterFrame> = latent_cameras
            .par_iter()
            .map(|c| rasterize(&mesh, c))
            .collect::<Result<_>>()?;
        let latent_maps: Vec<Array2<i64>> = latent_frames
            .iter()
            .map(|f| texel_map(f, &latent_table))
            .collect();
        let latent_depths: Vec<DepthMap> =
            latent_frames.iter().map(|f| f.depth.clone()).collect();
        let latent_weights = compute_view_weights(&latent_table, &latent_cameras, &latent_depths)?;
        Ok(Self {
            mesh,
            table,
            cameras,
            frames,
            maps,
            weights,
            latent_table,
            latent_cameras,
            latent_weights,
            latent_maps,
        })
    }

    /// Texture resolution as `(width, height)`.
    pub fn texture_size(&self) -> (usize, usize) {
        (self.table.width(), self.table.height())
    }
}

/// Settings for the final SGD texture reconstruction.
#[derive(Debug, Clone)]
pub struct SgdConfig {
    /// Number of SGD iterations.
    pub iterations: usize,
    /// Step size.
    pub lr: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            lr: 5e-4,
        }
    }
}

/// All run-time knobs of a synthesis run.
#[derive(Debug, Clone)]
pub struct RunParams {
    /// Coupling mode.
    pub mode: FusionMode,
    /// DDIM stochasticity (0 is the deterministic sampler).
    pub eta: f64,
    /// Classifier-free guidance weight passed to the predictor.
    pub guidance_weight: f64,
    /// Seed for the per-view initial latents (view `i` uses `base_seed + i`).
    pub base_seed: u64,
    /// Seed for the per-view stochastic re-noising draws; unused when
    /// `eta = 0` (and for DDIM modes the output then depends on `base_seed`
    /// only).
    pub noise_seed: u64,
    /// Per-step latent re-optimization settings.
    pub latent_opt: LatentOptConfig,
    /// When set, the per-step conversion becomes the joint latent/texture
    /// fine-tune (main mode only).
    pub joint_opt: Option<JointOptConfig>,
    /// Final reconstruction settings.
    pub sgd: SgdConfig,
    /// Prompt embeddings referenced by `prompt_of_camera`.
    pub prompts: Vec<PromptEmbedding>,
    /// Prompt index per camera.
    pub prompt_of_camera: Vec<usize>,
}

impl RunParams {
    /// Deterministic single-prompt defaults for `n_cameras` cameras.
    pub fn uniform(prompt: PromptEmbedding, n_cameras: usize) -> Self {
        Self {
            mode: FusionMode::Main,
            eta: 0.0,
            guidance_weight: 1.0,
            base_seed: 0,
            noise_seed: 0x517E_5EED,
            latent_opt: LatentOptConfig::default(),
            joint_opt: None,
            sgd: SgdConfig::default(),
            prompts: vec![prompt],
            prompt_of_camera: vec![0; n_cameras],
        }
    }
}

/// Per-timestep optimization traces (one inner vector per view).
#[derive(Debug, Clone)]
pub struct StepTrace {
    /// Schedule index the trace belongs to.
    pub t: usize,
    /// Loss trace per view; empty when the mode runs no optimization.
    pub per_view: Vec<Vec<f64>>,
}

/// Consistency statistics of a finished run.
#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    /// Mean per-texel cross-view color variance over texels seen by ≥2
    /// cameras.
    pub mean_variance: f64,
    /// 95th percentile of the same distribution (nearest-rank).
    pub p95_variance: f64,
    /// Number of texels seen by ≥2 cameras.
    pub multi_view_texels: usize,
    /// Number of texels with nonzero fusion weight.
    pub covered_texels: usize,
    /// Number of texels whose center lies on the surface.
    pub valid_texels: usize,
    /// Mean L1 between each final view and the texture re-rendered into
    /// that view (full image).
    pub per_view_l_diff: Vec<f64>,
    /// Mean L1 between renders and views over mesh-covered pixels only,
    /// pooled across views.
    pub rerender_l1: f64,
    /// Mean of `per_view_l_diff` grouped by prompt: `(prompt index, mean)`.
    pub per_set_l_diff: Vec<(usize, f64)>,
}

/// Everything a run produces.
pub struct RunResult {
    /// The texture fused at the lowest timestep, untouched by refinement.
    pub alg1_texture: Texture,
    /// The SGD-reconstructed texture with unpainted texels dilated.
    pub refined_texture: Texture,
    /// Final decoded views, one per camera.
    pub final_views: Vec<ImageView>,
    /// Consistency statistics of `refined_texture` against `final_views`.
    pub report: ConsistencyReport,
    /// Per-step optimization traces.
    pub traces: Vec<StepTrace>,
    /// Loss trace of the final SGD reconstruction.
    pub sgd_trace: Vec<f64>,
}

/// Errors if any latent in the stack is non-finite.
fn ensure_finite(stack: &LatentStack, stage: &'static str, step: usize) -> Result<()> {
    for (view, z) in stack.iter().enumerate() {
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { stage, step, view });
        }
    }
    Ok(())
}

/// Runs the full synthesis loop and returns both textures, the final
/// views, and the consistency report.
pub fn texpaint(
    scene: &Scene,
    predictors: &[Arc<dyn NoisePredictor>],
    codec: &dyn LatentCodec,
    schedule: &NoiseSchedule,
    params: &RunParams,
) -> Result<RunResult> {
    let n = scene.cameras.len();
    if predictors.len() != n {
        return Err(Error::Config(format!(
            "{} predictors for {n} cameras",
            predictors.len()
        )));
    }
    if params.prompt_of_camera.len() != n {
        return Err(Error::Config(format!(
            "prompt assignment covers {} of {n} cameras",
            params.prompt_of_camera.len()
        )));
    }
    if let Some(&bad) = params
        .prompt_of_camera
        .iter()
        .find(|&&p| p >= params.prompts.len())
    {
        return Err(Error::Config(format!(
            "camera assigned to prompt {bad} but only {} prompts given",
            params.prompts.len()
        )));
    }
    let (lsh, lsw, _) = codec.latent_shape();
    if (lsh, lsw) != (scene.latent_cameras[0].height, scene.latent_cameras[0].width) {
        return Err(Error::Config(
            "codec latent resolution differs from the scene's".into(),
        ));
    }
    if codec.image_shape() != (scene.cameras[0].height, scene.cameras[0].width, 3) {
        return Err(Error::Config(
            "codec image resolution differs from the cameras'".into(),
        ));
    }
    if params.joint_opt.is_some() && params.mode != FusionMode::Main {
        return Err(Error::Config(
            "the joint fine-tune applies to the main fusion mode only".into(),
        ));
    }

    let (tex_w, tex_h) = scene.texture_size();
    let mut texture = Texture::background(tex_w, tex_h);
    let mut z: LatentStack = (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.base_seed.wrapping_add(i as u64));
            sample_standard_normal(codec.latent_shape(), &mut rng)
        })
        .collect();
    let mut noise_rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| ChaCha8Rng::seed_from_u64(params.noise_seed.wrapping_add(i as u64)))
        .collect();

    let visited = schedule.visited();
    let mut traces: Vec<StepTrace> = Vec::with_capacity(visited.len());
    let mut outcome: Option<(Texture, Vec<ImageView>)> = None;

    for k in (0..visited.len()).rev() {
        let t = visited[k];
        let eps: LatentStack = (0..n)
            .into_par_iter()
            .map(|i| {
                predictors[i].predict(
                    &z[i],
                    t,
                    &scene.frames[i].depth,
                    &params.prompts[params.prompt_of_camera[i]],
                    params.guidance_weight,
                )
            })
            .collect::<Result<_>>()?;
        ensure_finite(&eps, "noise prediction", t)?;

        // What gets decoded and fused depends on the mode: clean estimates
        // everywhere except ancestral sampling, which fuses noisy decodes.
        let z0_hats: LatentStack = z
            .iter()
            .zip(&eps)
            .map(|(zi, ei)| ddim_predict_z0(zi, ei, t, schedule))
            .collect();
        ensure_finite(&z0_hats, "clean-latent estimate", t)?;
        let decode_src = if params.mode == FusionMode::DdpmFusion {
            &z
        } else {
            &z0_hats
        };
        let views: Vec<ImageView> = decode_src
            .par_iter()
            .enumerate()
            .map(|(i, zi)| {
                Ok(ImageView {
                    pixels: codec.decode(zi)?,
                    camera: i,
                })
            })
            .collect::<Result<_>>()?;

        let last = k == 0;
        // Latent-blend and independent chains skip color fusion during the
        // walk but still fuse once at the end so they produce a texture.
        let fuse_now = match params.mode {
            FusionMode::LatentBlend | FusionMode::Independent => last,
            _ => true,
        };
        if fuse_now {
            texture = fuse_color(&views, &scene.weights, Some(&texture))?;
        }
        if last {
            outcome = Some((texture.clone(), views));
            break;
        }
        let t_prev = visited[k - 1];

        // Convert the fused state back into per-view latents.
        let (z_bar, step_trace): (LatentStack, Vec<Vec<f64>>) = match params.mode {
            FusionMode::Main | FusionMode::DdpmFusion => {
                if let Some(joint_cfg) = &params.joint_opt {
                    let out = joint_optimize(
                        &z0_hats,
                        &texture,
                        &scene.maps,
                        scene.weights.canonical(),
                        codec,
                        joint_cfg,
                    )?;
                    texture = out.texture;
                    (out.latents, vec![out.trace; 1])
                } else {
                    let renders: Vec<Array3<f64>> = scene
                        .maps
                        .par_iter()
                        .map(|m| render_grid_with_map(m, &texture.data, &[BACKGROUND; 3]))
                        .collect();
                    let target = if params.mode == FusionMode::DdpmFusion {
                        &z
                    } else {
                        &z0_hats
                    };
                    let out = optimize_latents_against(target, &renders, codec, &params.latent_opt)?;
                    (out.latents, out.traces)
                }
            }
            FusionMode::DirectEncode => {
                let z_bar: LatentStack = scene
                    .maps
                    .par_iter()
                    .map(|m| {
                        let render = render_grid_with_map(m, &texture.data, &[BACKGROUND; 3]);
                        codec.encode(&render)
                    })
                    .collect::<Result<_>>()?;
                (z_bar, vec![Vec::new(); n])
            }
            FusionMode::LatentBlend => {
                let (blended, painted) = blend_latent_texture(&z0_hats, &scene.latent_weights)?;
                let z_bar: LatentStack = z0_hats
                    .iter()
                    .zip(&scene.latent_maps)
                    .map(|(zi, map)| {
                        let mut out = zi.clone();
                        let (h, w, c) = out.dim();
                        let ltw = blended.dim().1;
                        for py in 0..h {
                            for px in 0..w {
                                let tex = map[[py, px]];
                                if tex < 0 {
                                    continue;
                                }
                                let (ty, tx) = (tex as usize / ltw, tex as usize % ltw);
                                if painted[[ty, tx]] {
                                    for ch in 0..c {
                                        out[[py, px, ch]] = blended[[ty, tx, ch]];
                                    }
                                }
                            }
                        }
                        out
                    })
                    .collect();
                (z_bar, vec![Vec::new(); n])
            }
            FusionMode::Independent => (z0_hats.clone(), vec![Vec::new(); n]),
        };
        ensure_finite(&z_bar, "latent conversion", t)?;
        traces.push(StepTrace {
            t,
            per_view: step_trace,
        });

        // Re-noise to the next timestep with the *old* noise prediction.
        if params.mode == FusionMode::DdpmFusion {
            for i in 0..n {
                z[i] = ddpm_step(&z_bar[i], &eps[i], t, t_prev, schedule, &mut noise_rngs[i]);
            }
        } else {
            let sigma = schedule.sigma(t, t_prev, params.eta);
            for i in 0..n {
                let mut next = ddim_step_from_clean(&z_bar[i], &eps[i], t_prev, schedule, sigma)?;
                if sigma > 0.0 {
                    let noise = sample_standard_normal(next.dim(), &mut noise_rngs[i]);
                    next.zip_mut_with(&noise, |v, nz| *v += sigma * *nz);
                }
                z[i] = next;
            }
        }
        ensure_finite(&z, "re-noised latent", t_prev)?;
    }

    let (alg1_texture, final_views) = outcome.expect("loop always produces a final fusion");
    let (refined_texture, sgd_trace) = reconstruct_final_texture(
        &final_views,
        &scene.weights,
        &scene.table,
        &alg1_texture,
        &params.sgd,
    )?;
    let report = consistency_report(
        &refined_texture,
        &final_views,
        &scene.table,
        &scene.weights,
        &scene.maps,
        &params.prompt_of_camera,
    );
    Ok(RunResult {
        alg1_texture,
        refined_texture,
        final_views,
        report,
        traces,
        sgd_trace,
    })
}

/// Runs the named comparison variant with otherwise identical parameters.
pub fn run_ablation(
    scene: &Scene,
    predictors: &[Arc<dyn NoisePredictor>],
    codec: &dyn LatentCodec,
    schedule: &NoiseSchedule,
    params: &RunParams,
    variant: FusionMode,
) -> Result<RunResult> {
    let mut p = params.clone();
    p.mode = variant;
    if variant != FusionMode::Main {
        p.joint_opt = None;
    }
    texpaint(scene, predictors, codec, schedule, &p)
}

/// Reconstructs the final texture by SGD: every covered texel is matched
/// against the pixels it projects to in all views that see it (mean-sign
/// descent per texel), starting from the fused texture. Unpainted texels
/// are filled by dilation afterwards.
pub fn reconstruct_final_texture(
    final_views: &[ImageView],
    weights: &WeightField,
    table: &TexelTable,
    init: &Texture,
    cfg: &SgdConfig,
) -> Result<(Texture, Vec<f64>)> {
    let mut per_cam: Vec<Option<&Array3<f64>>> = vec![None; weights.n_cameras()];
    for v in final_views {
        if v.camera >= per_cam.len() || per_cam[v.camera].replace(&v.pixels).is_some() {
            return Err(Error::ShapeMismatch(
                "final views must reference each camera exactly once".into(),
            ));
        }
    }
    let per_cam: Vec<&Array3<f64>> = per_cam
        .into_iter()
        .enumerate()
        .map(|(k, g)| g.ok_or_else(|| Error::ShapeMismatch(format!("camera {k} has no view"))))
        .collect::<Result<_>>()?;
    let (th, tw) = (init.height(), init.width());
    let mut tex = init.data.clone();
    let mut grad = Array3::zeros(tex.dim());
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    for _ in 0..=cfg.iterations {
        let mut loss_sum = 0.0;
        let mut loss_terms = 0usize;
        grad.fill(0.0);
        for ty in 0..th {
            for tx in 0..tw {
                let texel = ty * tw + tx;
                let mut seen = 0.0;
                let mut signs = [0.0f64; 3];
                for &cam in weights.canonical() {
                    let Some((px, py)) = weights.pixel(texel, cam) else {
                        continue;
                    };
                    if weights.weight(texel, cam) <= 0.0 {
                        continue;
                    }
                    seen += 1.0;
                    for (ch, s) in signs.iter_mut().enumerate() {
                        let r = tex[[ty, tx, ch]] - per_cam[cam][[py, px, ch]];
                        loss_sum += r.abs();
                        loss_terms += 1;
                        *s += if r > 0.0 {
                            1.0
                        } else if r < 0.0 {
                            -1.0
                        } else {
                            0.0
                        };
                    }
                }
                if seen > 0.0 {
                    for (ch, s) in signs.iter().enumerate() {
                        grad[[ty, tx, ch]] = s / seen;
                    }
                }
            }
        }
        let loss = loss_sum / loss_terms.max(1) as f64;
        trace.push(loss);
        if !loss.is_finite() {
            return Err(Error::Optimization(
                "texture reconstruction produced a non-finite loss".into(),
            ));
        }
        if trace.len() == cfg.iterations + 1 {
            break;
        }
        crate::optim::sgd_step(
            tex.as_slice_mut().expect("layout"),
            grad.as_slice().expect("layout"),
            cfg.lr,
        );
    }
    let mut out = Texture {
        data: tex,
        painted: init.painted.clone(),
    };
    crate::fusion::dilate_unpainted(&mut out, table);
    Ok((out, trace))
}

/// Computes the consistency statistics of a texture against the final
/// decoded views.
pub fn consistency_report(
    texture: &Texture,
    final_views: &[ImageView],
    table: &TexelTable,
    weights: &WeightField,
    maps: &[Array2<i64>],
    prompt_of_camera: &[usize],
) -> ConsistencyReport {
    let n_cams = weights.n_cameras();
    let mut by_camera: Vec<Option<&ImageView>> = vec![None; n_cams];
    for v in final_views {
        by_camera[v.camera] = Some(v);
    }
    let per_cam: Vec<&Array3<f64>> = by_camera
        .iter()
        .map(|slot| &slot.expect("one view per camera").pixels)
        .collect();

    // Cross-view variance over texels visible from at least two cameras.
    let n_texels = table.len();
    let mut texel_vars: Vec<f64> = Vec::new();
    let mut covered = 0usize;
    for texel in 0..n_texels {
        if weights.covered(texel) {
            covered += 1;
        }
        let cams: Vec<usize> = (0..n_cams)
            .filter(|&c| weights.pixel(texel, c).is_some())
            .collect();
        if cams.len() < 2 {
            continue;
        }
        let mut var_sum = 0.0;
        for ch in 0..3 {
            let vals: Vec<f64> = cams
                .iter()
                .map(|&c| {
                    let (px, py) = weights.pixel(texel, c).expect("filtered visible");
                    per_cam[c][[py, px, ch]]
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            var_sum += vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        }
        texel_vars.push(var_sum / 3.0);
    }
    let multi_view_texels = texel_vars.len();
    let mean_variance = if texel_vars.is_empty() {
        0.0
    } else {
        texel_vars.iter().sum::<f64>() / texel_vars.len() as f64
    };
    let p95_variance = if texel_vars.is_empty() {
        0.0
    } else {
        let mut sorted = texel_vars.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        sorted[rank - 1]
    };

    // Re-render agreement.
    let mut per_view_l_diff = Vec::with_capacity(n_cams);
    let mut hit_sum = 0.0;
    let mut hit_count = 0usize;
    for cam in 0..n_cams {
        let render = render_grid_with_map(&maps[cam], &texture.data, &[BACKGROUND; 3]);
        let view = per_cam[cam];
        let mut sum = 0.0;
        let mut count = 0usize;
        let (h, w, c) = render.dim();
        for py in 0..h {
            for px in 0..w {
                let hit = maps[cam][[py, px]] >= 0;
                for ch in 0..c {
                    let d = (render[[py, px, ch]] - view[[py, px, ch]]).abs();
                    sum += d;
                    count += 1;
                    if hit {
                        hit_sum += d;
                        hit_count += 1;
                    }
                }
            }
        }
        per_view_l_diff.push(sum / count.max(1) as f64);
    }
    let rerender_l1 = hit_sum / hit_count.max(1) as f64;

    // Group L_diff by prompt.
    let mut per_set_l_diff: Vec<(usize, f64)> = Vec::new();
    let mut set_ids: Vec<usize> = prompt_of_camera.to_vec();
    set_ids.sort_unstable();
    set_ids.dedup();
    for set in set_ids {
        let members: Vec<usize> = (0..n_cams)
            .filter(|&c| prompt_of_camera.get(c) == Some(&set))
            .collect();
        if members.is_empty() {
            continue;
        }
        let mean =
            members.iter().map(|&c| per_view_l_diff[c]).sum::<f64>() / members.len() as f64;
        per_set_l_diff.push((set, mean));
    }

    ConsistencyReport {
        mean_variance,
        p95_variance,
        multi_view_texels,
        covered_texels: covered,
        valid_texels: table.valid_count(),
        per_view_l_diff,
        rerender_l1,
        per_set_l_diff,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{cube, unit_quad};
    use crate::models::{view_oracle_predictors, IdentityCodec, ToyDenoiser};
    use crate::patterns;
    use crate::render::sample_cameras;
    use nalgebra::{Point3, Vector3};

    fn quad_scene(res: usize, tex: usize, n_cams: usize) -> Scene {
        let cams = if n_cams == 1 {
            vec![Camera {
                position: Point3::new(0.0, 0.0, 1.5),
                look_at: Point3::origin(),
                up: Vector3::new(0.0, 1.0, 0.0),
                fov_y_deg: 45.0,
                width: res,
                height: res,
            }]
        } else {
            (0..n_cams)
                .map(|k| {
                    let ang = 0.35 * (k as f64 - (n_cams as f64 - 1.0) / 2.0);
                    Camera {
                        position: Point3::new(1.5 * ang.sin(), 0.0, 1.5 * ang.cos()),
                        look_at: Point3::origin(),
                        up: Vector3::new(0.0, 1.0, 0.0),
                        fov_y_deg: 45.0,
                        width: res,
                        height: res,
                    }
                })
                .collect()
        };
        Scene::build(unit_quad(), cams, (tex, tex), (res, res)).unwrap()
    }

    fn desk_schedule(steps: usize) -> NoiseSchedule {
        NoiseSchedule::linear(1000, 1e-4, 2e-2, steps).unwrap()
    }

    #[test]
    fn oracle_run_recovers_the_target_texture() {
        let res = 32;
        let tex = 48;
        let scene = quad_scene(res, tex, 2);
        let schedule = desk_schedule(8);
        let codec = IdentityCodec::new((res, res));
        // Gentle gradient: cross-view disagreement at a texel comes only
        // from nearest-texel fetch misalignment, so it scales with the
        // per-texel color step.
        let target = patterns::gradient(tex, tex, [0.3, 0.2, 0.5], [0.7, 0.4, 0.1]);
        let predictors = view_oracle_predictors(
            &schedule,
            &codec,
            &target,
            &scene.mesh,
            &scene.table,
            &scene.cameras,
            1.0,
        )
        .unwrap();
        let params = RunParams::uniform(PromptEmbedding::null(), 2);
        let out = texpaint(&scene, &predictors, &codec, &schedule, &params).unwrap();
        let mut err_sum = 0.0;
        let mut err_count = 0usize;
        for texel in 0..scene.table.len() {
            if !scene.weights.covered(texel) {
                continue;
            }
            let (tx, ty) = (texel % tex, texel / tex);
            for c in 0..3 {
                err_sum += (out.alg1_texture.data[[ty, tx, c]] - target[[ty, tx, c]]).abs();
                err_count += 1;
            }
        }
        let l1 = err_sum / err_count as f64;
        assert!(l1 <= 0.02, "visible-texel L1 {l1}");
        assert!(
            out.report.mean_variance <= 1e-4,
            "variance {}",
            out.report.mean_variance
        );
    }

    #[test]
    fn single_camera_matches_a_bare_chain() {
        // With one camera the coupling must be a no-op: the run's output is
        // exactly the projection of a plain per-view chain's final decode.
        let res = 16;
        let cam = Camera {
            position: Point3::new(0.0, 0.0, 1.0),
            look_at: Point3::origin(),
            up: Vector3::new(0.0, 1.0, 0.0),
            fov_y_deg: 2.0 * (0.5f64).atan().to_degrees(),
            width: res,
            height: res,
        };
        let scene = Scene::build(unit_quad(), vec![cam], (res, res), (res, res)).unwrap();
        let schedule = desk_schedule(5);
        let codec = IdentityCodec::new((res, res));
        let predictor: Arc<dyn NoisePredictor> =
            Arc::new(ToyDenoiser::new(7, codec.latent_shape()));
        let params = RunParams::uniform(PromptEmbedding::from_text("test prompt"), 1);
        let out = texpaint(
            &scene,
            std::slice::from_ref(&predictor),
            &codec,
            &schedule,
            &params,
        )
        .unwrap();

        // Bare chain with the same seed, predictor, and schedule.
        let mut rng = ChaCha8Rng::seed_from_u64(params.base_seed);
        let mut z = sample_standard_normal(codec.latent_shape(), &mut rng);
        let visited = schedule.visited();
        let prompt = &params.prompts[0];
        let mut final_decode = None;
        for k in (0..visited.len()).rev() {
            let t = visited[k];
            let eps = predictor
                .predict(&z, t, &scene.frames[0].depth, prompt, 1.0)
                .unwrap();
            let z0 = ddim_predict_z0(&z, &eps, t, &schedule);
            if k == 0 {
                final_decode = Some(codec.decode(&z0).unwrap());
                break;
            }
            z = ddim_step_from_clean(&z0, &eps, visited[k - 1], &schedule, 0.0).unwrap();
        }
        let bare = final_decode.unwrap();
        // The aligned camera maps pixel (px, py) to texel (px, res-1-py).
        let mut worst = 0.0f64;
        for py in 0..res {
            for px in 0..res {
                for c in 0..3 {
                    let d =
                        (out.alg1_texture.data[[res - 1 - py, px, c]] - bare[[py, px, c]]).abs();
                    worst = worst.max(d);
                }
            }
        }
        assert!(worst <= 1e-3, "worst texel deviation {worst}");
    }

    #[test]
    fn identical_config_and_seed_reproduce_bit_identical_textures() {
        let res = 16;
        let scene = Scene::build(
            cube(),
            sample_cameras(2, 1.5, 30.0, 70.0, (res, res)),
            (24, 24),
            (res, res),
        )
        .unwrap();
        let schedule = desk_schedule(4);
        let codec = IdentityCodec::new((res, res));
        let predictor: Arc<dyn NoisePredictor> =
            Arc::new(ToyDenoiser::new(3, codec.latent_shape()));
        let predictors = vec![predictor.clone(), predictor];
        let mut params = RunParams::uniform(PromptEmbedding::from_text("determinism"), 2);
        params.eta = 0.6; // exercise the stochastic path too
        params.sgd.iterations = 30;
        let a = texpaint(&scene, &predictors, &codec, &schedule, &params).unwrap();
        let b = texpaint(&scene, &predictors, &codec, &schedule, &params).unwrap();
        assert_eq!(a.alg1_texture.data, b.alg1_texture.data);
        assert_eq!(a.refined_texture.data, b.refined_texture.data);
        assert_eq!(a.report.mean_variance, b.report.mean_variance);
    }

    #[test]
    fn noise_seed_is_irrelevant_when_eta_is_zero() {
        let res = 16;
        let scene = quad_scene(res, 24, 2);
        let schedule = desk_schedule(4);
        let codec = IdentityCodec::new((res, res));
        let predictor: Arc<dyn NoisePredictor> =
            Arc::new(ToyDenoiser::new(11, codec.latent_shape()));
        let predictors = vec![predictor.clone(), predictor];
        let mut params = RunParams::uniform(PromptEmbedding::from_text("isolation"), 2);
        params.sgd.iterations = 10;
        let a = texpaint(&scene, &predictors, &codec, &schedule, &params).unwrap();
        params.noise_seed ^= 0xDEAD_BEEF;
        let b = texpaint(&scene, &predictors, &codec, &schedule, &params).unwrap();
        assert_eq!(a.refined_texture.data, b.refined_texture.data);
        params.eta = 0.8;
        let c = texpaint(&scene, &predictors, &codec, &schedule, &params).unwrap();
        params.noise_seed ^= 0xDEAD_BEEF;
        let d = texpaint(&scene, &predictors, &codec, &schedule, &params).unwrap();
        assert_ne!(c.refined_texture.data, d.refined_texture.data);
    }

    #[test]
    fn degenerate_multiprompt_equals_single_prompt() {
        let res = 16;
        let scene = quad_scene(res, 24, 2);
        let schedule = desk_schedule(4);
        let codec = IdentityCodec::new((res, res));
        let predictor: Arc<dyn NoisePredictor> =
            Arc::new(ToyDenoiser::new(5, codec.latent_shape()));
        let predictors = vec![predictor.clone(), predictor];
        let mut single = RunParams::uniform(PromptEmbedding::from_text("same words"), 2);
        single.sgd.iterations = 10;
        let mut multi = single.clone();
        multi.prompts = vec![
            PromptEmbedding::from_text("same words"),
            PromptEmbedding::from_text("same words"),
        ];
        multi.prompt_of_camera = vec![0, 1];
        let a = texpaint(&scene, &predictors, &codec, &schedule, &single).unwrap();
        let b = texpaint(&scene, &predictors, &codec, &schedule, &multi).unwrap();
        assert_eq!(a.refined_texture.data, b.refined_texture.data);
        assert_eq!(b.report.per_set_l_diff.len(), 2);
    }

    #[test]
    fn painted_fraction_grows_with_nested_camera_sets() {
        let mesh = cube();
        let table = build_texel_table(&mesh, (32, 32)).unwrap();
        let cams = sample_cameras(4, 1.5, 30.0, 70.0, (24, 24));
        let mut last = 0usize;
        for count in 1..=4 {
            let subset = cams[..count].to_vec();
            let depths: Vec<DepthMap> = subset
                .iter()
                .map(|c| crate::render::render_depth(&mesh, c).unwrap())
                .collect();
            let field = compute_view_weights(&table, &subset, &depths).unwrap();
            let covered = (0..table.len()).filter(|&t| field.covered(t)).count();
            assert!(
                covered >= last,
                "coverage shrank from {last} to {covered} at {count} cameras"
            );
            last = covered;
        }
        assert!(last > 0);
    }

    #[test]
    fn reconstruction_is_stationary_for_consistent_views() {
        let res = 24;
        let tex = 24;
        let scene = quad_scene(res, tex, 2);
        let target = patterns::gradient(tex, tex, [0.2; 3], [0.8; 3]);
        let views: Vec<ImageView> = scene
            .cameras
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Ok(ImageView {
                    pixels: crate::render::render_grid(
                        &scene.mesh,
                        &target,
                        &scene.table,
                        c,
                        &[BACKGROUND; 3],
                    )?,
                    camera: i,
                })
            })
            .collect::<Result<_>>()
            .unwrap();
        let init = fuse_color(&views, &scene.weights, None).unwrap();
        let (rec, trace) = reconstruct_final_texture(
            &views,
            &scene.weights,
            &scene.table,
            &init,
            &SgdConfig::default(),
        )
        .unwrap();
        assert!(trace.last().unwrap() <= trace.first().unwrap());
        let mut worst = 0.0f64;
        for texel in 0..scene.table.len() {
            if !scene.weights.covered(texel) {
                continue;
            }
            let (tx, ty) = (texel % tex, texel / tex);
            for c in 0..3 {
                worst = worst.max((rec.data[[ty, tx, c]] - init.data[[ty, tx, c]]).abs());
            }
        }
        assert!(worst <= 1e-3, "covered texels moved by {worst}");
    }

    #[test]
    fn reconstruction_of_conflicting_views_stays_between_them() {
        let res = 16;
        let quad = unit_quad();
        let cam = Camera {
            position: Point3::new(0.0, 0.0, 1.5),
            look_at: Point3::origin(),
            up: Vector3::new(0.0, 1.0, 0.0),
            fov_y_deg: 45.0,
            width: res,
            height: res,
        };
        let scene = Scene::build(quad, vec![cam.clone(), cam], (res, res), (res, res)).unwrap();
        let lo = 0.2;
        let hi = 0.9;
        let views = vec![
            ImageView {
                pixels: patterns::constant(res, res, [lo; 3]),
                camera: 0,
            },
            ImageView {
                pixels: patterns::constant(res, res, [hi; 3]),
                camera: 1,
            },
        ];
        let init = fuse_color(&views, &scene.weights, None).unwrap();
        let (rec, trace) = reconstruct_final_texture(
            &views,
            &scene.weights,
            &scene.table,
            &init,
            &SgdConfig::default(),
        )
        .unwrap();
        assert!(trace.last().unwrap() <= trace.first().unwrap());
        for texel in 0..scene.table.len() {
            if !scene.weights.covered(texel) {
                continue;
            }
            let (tx, ty) = (texel % res, texel / res);
            for c in 0..3 {
                let v = rec.data[[ty, tx, c]];
                assert!(v >= lo && v <= hi, "texel {texel} escaped the hull: {v}");
            }
        }
    }

    #[test]
    fn report_statistics_match_hand_computations() {
        let res = 16;
        let quad = unit_quad();
        let cam = Camera {
            position: Point3::new(0.0, 0.0, 1.5),
            look_at: Point3::origin(),
            up: Vector3::new(0.0, 1.0, 0.0),
            fov_y_deg: 45.0,
            width: res,
            height: res,
        };
        let scene = Scene::build(quad, vec![cam.clone(), cam], (res, res), (res, res)).unwrap();
        let equal_views = vec![
            ImageView {
                pixels: patterns::constant(res, res, [0.4; 3]),
                camera: 0,
            },
            ImageView {
                pixels: patterns::constant(res, res, [0.4; 3]),
                camera: 1,
            },
        ];
        let tex = fuse_color(&equal_views, &scene.weights, None).unwrap();
        let rep = consistency_report(
            &tex,
            &equal_views,
            &scene.table,
            &scene.weights,
            &scene.maps,
            &[0, 0],
        );
        assert_eq!(rep.mean_variance, 0.0);
        assert_eq!(rep.p95_variance, 0.0);
        assert!(rep.multi_view_texels > 0);

        let split_views = vec![
            ImageView {
                pixels: patterns::constant(res, res, [0.4; 3]),
                camera: 0,
            },
            ImageView {
                pixels: patterns::constant(res, res, [0.6; 3]),
                camera: 1,
            },
        ];
        let tex2 = fuse_color(&split_views, &scene.weights, None).unwrap();
        let rep2 = consistency_report(
            &tex2,
            &split_views,
            &scene.table,
            &scene.weights,
            &scene.maps,
            &[0, 1],
        );
        // Population variance of {0.4, 0.6} is 0.01 in every channel.
        assert!((rep2.mean_variance - 0.01).abs() < 1e-12);
        assert!((rep2.p95_variance - 0.01).abs() < 1e-12);
        assert_eq!(rep2.per_set_l_diff.len(), 2);
    }

    #[test]
    fn every_ablation_mode_completes_with_finite_output() {
        let res = 16;
        let scene = quad_scene(res, 24, 2);
        let schedule = desk_schedule(4);
        let codec = IdentityCodec::new((res, res));
        let predictor: Arc<dyn NoisePredictor> =
            Arc::new(ToyDenoiser::new(9, codec.latent_shape()));
        let predictors = vec![predictor.clone(), predictor];
        let mut params = RunParams::uniform(PromptEmbedding::from_text("modes"), 2);
        params.sgd.iterations = 10;
        for mode in [
            FusionMode::Main,
            FusionMode::LatentBlend,
            FusionMode::DdpmFusion,
            FusionMode::DirectEncode,
            FusionMode::Independent,
        ] {
            let out = run_ablation(&scene, &predictors, &codec, &schedule, &params, mode)
                .unwrap_or_else(|e| panic!("{} failed: {e}", mode.name()));
            assert!(
                out.refined_texture.data.iter().all(|v| v.is_finite()),
                "{} produced non-finite texels",
                mode.name()
            );
            assert!(out.report.mean_variance.is_finite());
        }
    }

    #[test]
    fn joint_fine_tune_mode_runs_and_descends() {
        let res = 16;
        let scene = quad_scene(res, 24, 2);
        let schedule = desk_schedule(4);
        let codec = IdentityCodec::new((res, res));
        let predictor: Arc<dyn NoisePredictor> =
            Arc::new(ToyDenoiser::new(21, codec.latent_shape()));
        let predictors = vec![predictor.clone(), predictor];
        let mut params = RunParams::uniform(PromptEmbedding::from_text("joint"), 2);
        params.joint_opt = Some(JointOptConfig::default());
        params.sgd.iterations = 10;
        let out = texpaint(&scene, &predictors, &codec, &schedule, &params).unwrap();
        for step in &out.traces {
            let trace = &step.per_view[0];
            assert!(
                trace.last().unwrap() <= trace.first().unwrap(),
                "joint objective rose at t={}",
                step.t
            );
        }
        assert!(out.refined_texture.data.iter().all(|v| v.is_finite()));
    }
}
