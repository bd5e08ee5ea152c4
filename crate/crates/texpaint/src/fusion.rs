//! View weighting, color-space texture fusion, and latent re-optimization.
//!
//! This is the coupling machinery between denoising chains. Each chain's
//! clean-image prediction is projected onto the texture through per-view
//! cosine weights and fused texel-by-texel; the fused texture is re-rendered
//! and each chain's latent is re-optimized toward its view's render, with
//! gradients flowing through the codec's decoder only — never through the
//! rasterizer. All cross-camera reductions run in a canonical camera order
//! (sorted by camera position), so results do not depend on how the camera
//! list happens to be ordered or on worker scheduling.

use ndarray::{Array2, Array3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::TexelTable;
use crate::models::LatentCodec;
use crate::optim::{l1_loss, l1_loss_grad, AdamW, AdamWConfig};
use crate::render::{
    canonical_camera_order, project_texel, render_grid_with_map, Camera, DepthMap, ImageView,
    BACKGROUND,
};
use crate::schedule::{LatentGrid, LatentStack};

/// An RGB texel grid plus a mask of texels that have received real content.
#[derive(Debug, Clone)]
pub struct Texture {
    /// Texel colors, `(height, width, 3)`.
    pub data: Array3<f64>,
    /// True where a texel has been painted by fusion (or dilation).
    pub painted: Array2<bool>,
}

impl Texture {
    /// A uniformly mid-gray, fully unpainted texture.
    pub fn background(width: usize, height: usize) -> Self {
        Self {
            data: Array3::from_elem((height, width, 3), BACKGROUND),
            painted: Array2::from_elem((height, width), false),
        }
    }

    /// Wraps existing texel data, marking every texel painted.
    pub fn from_data(data: Array3<f64>) -> Self {
        let (h, w, _) = data.dim();
        Self {
            data,
            painted: Array2::from_elem((h, w), true),
        }
    }

    /// Texture width in texels.
    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    /// Texture height in texels.
    pub fn height(&self) -> usize {
        self.data.dim().0
    }
}

/// Per-texel, per-camera fusion weights with the projected pixel of each
/// visible (texel, camera) pair.
#[derive(Debug, Clone)]
pub struct WeightField {
    width: usize,
    height: usize,
    n_cameras: usize,
    image_size: (usize, usize),
    /// `[texel * n_cameras + camera]`; zero when the camera cannot see the
    /// texel (occluded, off-screen, or back-facing).
    weights: Vec<f64>,
    /// Projected pixel `[px, py]`, or `[-1, -1]` when invisible.
    pixels: Vec<[i64; 2]>,
    /// Camera indices sorted by camera position; every reduction over
    /// cameras follows this order.
    canonical: Vec<usize>,
}

impl WeightField {
    /// Number of cameras the field was built for.
    pub fn n_cameras(&self) -> usize {
        self.n_cameras
    }

    /// Fusion weight of `camera` at row-major `texel`.
    pub fn weight(&self, texel: usize, camera: usize) -> f64 {
        self.weights[texel * self.n_cameras + camera]
    }

    /// Pixel `(px, py)` the texel projects to in `camera`, if visible.
    pub fn pixel(&self, texel: usize, camera: usize) -> Option<(usize, usize)> {
        let p = self.pixels[texel * self.n_cameras + camera];
        if p[0] < 0 {
            None
        } else {
            Some((p[0] as usize, p[1] as usize))
        }
    }

    /// Sum of weights over visible cameras (canonical order).
    pub fn coverage(&self, texel: usize) -> f64 {
        self.canonical
            .iter()
            .map(|&c| self.weight(texel, c))
            .sum()
    }

    /// Number of cameras that see the texel (regardless of weight).
    pub fn visible_count(&self, texel: usize) -> usize {
        (0..self.n_cameras)
            .filter(|&c| self.pixel(texel, c).is_some())
            .count()
    }

    /// True when the texel receives nonzero total weight.
    pub fn covered(&self, texel: usize) -> bool {
        self.coverage(texel) > 0.0
    }

    /// Canonical camera iteration order.
    pub fn canonical(&self) -> &[usize] {
        &self.canonical
    }
}

/// Computes cosine view weights masked by visibility.
///
/// For every texel center and camera: weight is
/// `max(0, ⟨(camera − world)/‖camera − world‖, normal⟩)` when the texel is
/// visible in that camera, zero otherwise.
pub fn compute_view_weights(
    table: &TexelTable,
    cameras: &[Camera],
    depth_maps: &[DepthMap],
) -> Result<WeightField> {
    if cameras.is_empty() {
        return Err(Error::Config("at least one camera is required".into()));
    }
    if cameras.len() != depth_maps.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} cameras but {} depth maps",
            cameras.len(),
            depth_maps.len()
        )));
    }
    for (c, d) in cameras.iter().zip(depth_maps) {
        if (d.height(), d.width()) != (c.height, c.width) {
            return Err(Error::ShapeMismatch(
                "depth map resolution differs from its camera".into(),
            ));
        }
        if (c.width, c.height) != (cameras[0].width, cameras[0].height) {
            return Err(Error::ShapeMismatch(
                "all cameras must share one image resolution".into(),
            ));
        }
    }
    let n_cams = cameras.len();
    let n_tex = table.len();
    let (tw, th) = (table.width(), table.height());
    let mut weights = vec![0.0; n_tex * n_cams];
    let mut pixels = vec![[-1i64; 2]; n_tex * n_cams];
    weights
        .par_chunks_mut(n_cams)
        .zip(pixels.par_chunks_mut(n_cams))
        .enumerate()
        .for_each(|(texel, (wrow, prow))| {
            let (tx, ty) = (texel % tw, texel / tw);
            let Some(entry) = table.entry(tx, ty) else {
                return;
            };
            for (k, (cam, depth)) in cameras.iter().zip(depth_maps).enumerate() {
                if let Some((px, py)) = project_texel(table, cam, depth, (tx, ty)) {
                    let to_cam = cam.position - entry.world;
                    let norm = to_cam.norm();
                    if norm > 1e-12 {
                        wrow[k] = (to_cam.dot(&entry.normal) / norm).max(0.0);
                        prow[k] = [px as i64, py as i64];
                    }
                }
            }
        });
    Ok(WeightField {
        width: tw,
        height: th,
        n_cameras: n_cams,
        image_size: (cameras[0].width, cameras[0].height),
        weights,
        pixels,
        canonical: canonical_camera_order(cameras),
    })
}

/// Weighted per-texel fusion of per-camera grids; the workhorse behind both
/// color fusion and the latent-space baseline.
fn fuse_grids(
    per_camera: &[&Array3<f64>],
    weights: &WeightField,
    prev: Option<(&Array3<f64>, &Array2<bool>)>,
    fill: f64,
) -> Result<(Array3<f64>, Array2<bool>)> {
    if per_camera.len() != weights.n_cameras {
        return Err(Error::ShapeMismatch(format!(
            "{} grids for {} cameras",
            per_camera.len(),
            weights.n_cameras
        )));
    }
    let channels = per_camera[0].dim().2;
    for g in per_camera {
        let (h, w, c) = g.dim();
        if (w, h) != weights.image_size || c != channels {
            return Err(Error::ShapeMismatch(format!(
                "view grid is {:?}, expected ({}, {}, {channels})",
                g.dim(),
                weights.image_size.1,
                weights.image_size.0
            )));
        }
    }
    let (tw, th) = (weights.width, weights.height);
    let mut data = Array3::from_elem((th, tw, channels), fill);
    let mut painted = Array2::from_elem((th, tw), false);
    if let Some((pdata, ppainted)) = prev {
        if pdata.dim() != data.dim() {
            return Err(Error::ShapeMismatch(
                "previous texture resolution differs".into(),
            ));
        }
        data.assign(pdata);
        painted.assign(ppainted);
    }
    for ty in 0..th {
        for tx in 0..tw {
            let texel = ty * tw + tx;
            let mut den = 0.0;
            let mut num = vec![0.0; channels];
            for &cam in &weights.canonical {
                let w = weights.weight(texel, cam);
                if w <= 0.0 {
                    continue;
                }
                let (px, py) = weights
                    .pixel(texel, cam)
                    .expect("positive weight implies visibility");
                den += w;
                for (ch, acc) in num.iter_mut().enumerate() {
                    *acc += w * per_camera[cam][[py, px, ch]];
                }
            }
            if den > 0.0 {
                for (ch, acc) in num.iter().enumerate() {
                    data[[ty, tx, ch]] = acc / den;
                }
                painted[[ty, tx]] = true;
            }
        }
    }
    Ok((data, painted))
}

/// Fuses per-view image predictions into a texture (weighted nearest-pixel
/// average over visible cameras).
///
/// Texels no camera covers retain their value from `prev` (mid-gray when
/// `prev` is absent) and stay unpainted.
pub fn fuse_color(
    views: &[ImageView],
    weights: &WeightField,
    prev: Option<&Texture>,
) -> Result<Texture> {
    let mut per_cam: Vec<Option<&Array3<f64>>> = vec![None; weights.n_cameras];
    for v in views {
        if v.camera >= weights.n_cameras {
            return Err(Error::ShapeMismatch(format!(
                "view references camera {} of {}",
                v.camera, weights.n_cameras
            )));
        }
        if per_cam[v.camera].replace(&v.pixels).is_some() {
            return Err(Error::ShapeMismatch(format!(
                "two views reference camera {}",
                v.camera
            )));
        }
    }
    let per_cam: Vec<&Array3<f64>> = per_cam
        .into_iter()
        .enumerate()
        .map(|(k, g)| g.ok_or_else(|| Error::ShapeMismatch(format!("camera {k} has no view"))))
        .collect::<Result<_>>()?;
    let (data, painted) = fuse_grids(
        &per_cam,
        weights,
        prev.map(|t| (&t.data, &t.painted)),
        BACKGROUND,
    )?;
    Ok(Texture { data, painted })
}

/// Latent-space fusion baseline: applies the same weighted average directly
/// to per-view latent grids on a latent-resolution texel table. Returns the
/// blended latent texture and its painted mask.
pub fn blend_latent_texture(
    latents: &LatentStack,
    weights: &WeightField,
) -> Result<(Array3<f64>, Array2<bool>)> {
    let per_cam: Vec<&Array3<f64>> = latents.iter().collect();
    fuse_grids(&per_cam, weights, None, 0.0)
}

/// Settings for per-view latent re-optimization.
#[derive(Debug, Clone)]
pub struct LatentOptConfig {
    /// Optimizer iterations per view per step.
    pub iterations: usize,
    /// AdamW hyperparameters.
    pub adamw: AdamWConfig,
}

impl Default for LatentOptConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            adamw: AdamWConfig::default(),
        }
    }
}

/// Result of a latent re-optimization pass.
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    /// Optimized per-view latents (camera order).
    pub latents: LatentStack,
    /// Per-view loss traces; entry 0 is the pre-optimization loss.
    pub traces: Vec<Vec<f64>>,
    /// Sum of per-view losses before optimization.
    pub initial_loss: f64,
    /// Sum of per-view losses after optimization; never exceeds the initial.
    pub final_loss: f64,
}

/// Re-optimizes each view's latent so its decode matches that view's render
/// of the fused texture (the renders are constants of the optimization).
///
/// Views are independent problems and run concurrently. Each view's endpoint
/// loss is guarded: if an optimization ends worse than it started, it is
/// retried once at a tenth of the learning rate, and if that still fails the
/// initial latent is returned unchanged.
pub fn optimize_latents_against(
    z0_hats: &LatentStack,
    renders: &[Array3<f64>],
    codec: &dyn LatentCodec,
    cfg: &LatentOptConfig,
) -> Result<OptimizeOutcome> {
    if z0_hats.len() != renders.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} latents but {} renders",
            z0_hats.len(),
            renders.len()
        )));
    }
    let per_view: Vec<Result<(LatentGrid, Vec<f64>)>> = z0_hats
        .par_iter()
        .zip(renders.par_iter())
        .map(|(z0, target)| {
            let (z, trace) = descend_one(z0, target, codec, cfg.iterations, &cfg.adamw)?;
            if trace.last().unwrap() > trace.first().unwrap() {
                let mut retry_cfg = cfg.adamw.clone();
                retry_cfg.lr /= 10.0;
                let (z2, trace2) = descend_one(z0, target, codec, cfg.iterations, &retry_cfg)?;
                if trace2.last().unwrap() <= trace2.first().unwrap() {
                    return Ok((z2, trace2));
                }
                let initial = trace2[0];
                return Ok((z0.clone(), vec![initial, initial]));
            }
            Ok((z, trace))
        })
        .collect();
    let mut latents = Vec::with_capacity(z0_hats.len());
    let mut traces = Vec::with_capacity(z0_hats.len());
    let mut initial_loss = 0.0;
    let mut final_loss = 0.0;
    for r in per_view {
        let (z, trace) = r?;
        initial_loss += trace.first().copied().unwrap_or(0.0);
        final_loss += trace.last().copied().unwrap_or(0.0);
        latents.push(z);
        traces.push(trace);
    }
    if !final_loss.is_finite() {
        return Err(Error::Optimization(
            "latent re-optimization produced a non-finite loss".into(),
        ));
    }
    Ok(OptimizeOutcome {
        latents,
        traces,
        initial_loss,
        final_loss,
    })
}

/// Convenience wrapper that renders the fused texture per camera first.
pub fn optimize_latents(
    z0_hats: &LatentStack,
    fused: &Texture,
    mesh: &crate::geometry::Mesh,
    table: &TexelTable,
    cameras: &[Camera],
    codec: &dyn LatentCodec,
    cfg: &LatentOptConfig,
) -> Result<OptimizeOutcome> {
    let renders: Vec<Array3<f64>> = cameras
        .iter()
        .map(|c| crate::render::render_grid(mesh, &fused.data, table, c, &[BACKGROUND; 3]))
        .collect::<Result<_>>()?;
    optimize_latents_against(z0_hats, &renders, codec, cfg)
}

/// AdamW descent of one view's mean-L1 decode-vs-render objective.
fn descend_one(
    z0: &LatentGrid,
    target: &Array3<f64>,
    codec: &dyn LatentCodec,
    iterations: usize,
    adamw: &AdamWConfig,
) -> Result<(LatentGrid, Vec<f64>)> {
    let mut z = z0.clone();
    let n = z.len();
    let mut opt = AdamW::new(adamw.clone(), n);
    let mut trace = Vec::with_capacity(iterations + 1);
    let tgt = target.as_slice().expect("standard layout");
    for _ in 0..iterations {
        let decoded = codec.decode(&z)?;
        let (loss, grad_img) = l1_loss_grad(decoded.as_slice().expect("layout"), tgt);
        trace.push(loss);
        let grad_arr = Array3::from_shape_vec(decoded.dim(), grad_img).expect("shape");
        let grad_z = codec.decode_vjp(&z, &grad_arr)?;
        opt.step(
            z.as_slice_mut().expect("layout"),
            grad_z.as_slice().expect("layout"),
        );
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::Optimization(
                "latent became non-finite during re-optimization".into(),
            ));
        }
    }
    let decoded = codec.decode(&z)?;
    trace.push(l1_loss(decoded.as_slice().expect("layout"), tgt));
    Ok((z, trace))
}

/// Settings for the joint latent/texture fine-tune.
#[derive(Debug, Clone)]
pub struct JointOptConfig {
    /// Simultaneous-descent iterations.
    pub iterations: usize,
    /// AdamW hyperparameters for the latents.
    pub latent_adamw: AdamWConfig,
    /// AdamW hyperparameters for the texture.
    pub texture_adamw: AdamWConfig,
}

impl Default for JointOptConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            latent_adamw: AdamWConfig::default(),
            texture_adamw: AdamWConfig::default(),
        }
    }
}

/// Result of the joint fine-tune.
#[derive(Debug, Clone)]
pub struct JointOutcome {
    /// Optimized per-view latents.
    pub latents: LatentStack,
    /// Optimized texture.
    pub texture: Texture,
    /// Total-objective trace; entry 0 is the pre-optimization value.
    pub trace: Vec<f64>,
    /// Objective before optimization.
    pub initial_loss: f64,
    /// Objective after optimization; never exceeds the initial.
    pub final_loss: f64,
}

/// Jointly fine-tunes the per-view latents and the texture itself.
///
/// The objective sums, over views, the mean-L1 between each view's render of
/// the *current* texture and (a) the decode of that view's optimizable
/// latent and (b) the decode of its frozen prediction. Texture gradients
/// flow through the fixed pixel-to-texel correspondence in `maps` as a
/// scatter-add of residual signs accumulated in canonical camera order, so
/// no differentiable renderer is needed. Endpoint descent is guarded like
/// [`optimize_latents_against`].
pub fn joint_optimize(
    z0_hats: &LatentStack,
    texture_init: &Texture,
    maps: &[Array2<i64>],
    canonical: &[usize],
    codec: &dyn LatentCodec,
    cfg: &JointOptConfig,
) -> Result<JointOutcome> {
    if z0_hats.len() != maps.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} latents but {} pixel maps",
            z0_hats.len(),
            maps.len()
        )));
    }
    let mut seen = vec![false; z0_hats.len()];
    for &c in canonical {
        if c >= seen.len() || std::mem::replace(&mut seen[c], true) {
            return Err(Error::Config(
                "camera order must be a permutation of the camera indices".into(),
            ));
        }
    }
    if !seen.iter().all(|s| *s) {
        return Err(Error::Config(
            "camera order must cover every camera".into(),
        ));
    }
    let frozen_decodes: Vec<Array3<f64>> = z0_hats
        .iter()
        .map(|z| codec.decode(z))
        .collect::<Result<_>>()?;
    let run = |latent_cfg: &AdamWConfig, texture_cfg: &AdamWConfig| -> Result<(LatentStack, Array3<f64>, Vec<f64>)> {
        let mut latents: LatentStack = z0_hats.to_vec();
        let mut tex = texture_init.data.clone();
        let mut lat_opts: Vec<AdamW> = latents
            .iter()
            .map(|z| AdamW::new(latent_cfg.clone(), z.len()))
            .collect();
        let mut tex_opt = AdamW::new(texture_cfg.clone(), tex.len());
        let mut trace = Vec::with_capacity(cfg.iterations + 1);
        for _ in 0..=cfg.iterations {
            // Per-view losses and gradients at the current point.
            let per_view: Vec<Result<(f64, LatentGrid, Array3<f64>)>> = latents
                .par_iter()
                .enumerate()
                .map(|(i, z)| {
                    let render = render_grid_with_map(&maps[i], &tex, &[BACKGROUND; 3]);
                    let rslice = render.as_slice().expect("layout");
                    let decoded = codec.decode(z)?;
                    let (loss_a, ga) = l1_loss_grad(decoded.as_slice().expect("layout"), rslice);
                    let ga = Array3::from_shape_vec(decoded.dim(), ga).expect("shape");
                    let grad_z = codec.decode_vjp(z, &ga)?;
                    // Frozen-prediction term: contributes to the loss and to
                    // the texture gradient only.
                    let frozen = &frozen_decodes[i];
                    let loss_b = l1_loss(frozen.as_slice().expect("layout"), rslice);
                    let mut tex_grad = Array3::zeros(tex.dim());
                    scatter_texture_grad(&mut tex_grad, &maps[i], &decoded, &render);
                    scatter_texture_grad(&mut tex_grad, &maps[i], frozen, &render);
                    Ok((loss_a + loss_b, grad_z, tex_grad))
                })
                .collect();
            let mut total = 0.0;
            let mut z_grads: Vec<Option<LatentGrid>> = vec![None; latents.len()];
            let mut tex_grad = Array3::zeros(tex.dim());
            let mut parts: Vec<Option<(f64, LatentGrid, Array3<f64>)>> =
                per_view.into_iter().map(|r| r.map(Some)).collect::<Result<_>>()?;
            for &cam in canonical {
                let (loss, gz, gt) = parts[cam].take().expect("each camera exactly once");
                total += loss;
                tex_grad += &gt;
                z_grads[cam] = Some(gz);
            }
            trace.push(total);
            if !total.is_finite() {
                return Err(Error::Optimization(
                    "joint fine-tune produced a non-finite loss".into(),
                ));
            }
            if trace.len() == cfg.iterations + 1 {
                break;
            }
            for (i, z) in latents.iter_mut().enumerate() {
                let g = z_grads[i].take().expect("gradient computed");
                lat_opts[i].step(
                    z.as_slice_mut().expect("layout"),
                    g.as_slice().expect("layout"),
                );
            }
            tex_opt.step(
                tex.as_slice_mut().expect("layout"),
                tex_grad.as_slice().expect("layout"),
            );
        }
        Ok((latents, tex, trace))
    };
    let (mut latents, mut tex, mut trace) = run(&cfg.latent_adamw, &cfg.texture_adamw)?;
    if trace.last().unwrap() > trace.first().unwrap() {
        let mut lat = cfg.latent_adamw.clone();
        let mut tcf = cfg.texture_adamw.clone();
        lat.lr /= 10.0;
        tcf.lr /= 10.0;
        let (l2, t2, tr2) = run(&lat, &tcf)?;
        if tr2.last().unwrap() <= tr2.first().unwrap() {
            latents = l2;
            tex = t2;
            trace = tr2;
        } else {
            let initial = trace[0];
            latents = z0_hats.to_vec();
            tex = texture_init.data.clone();
            trace = vec![initial, initial];
        }
    }
    // Texels covered by any pixel map can have received gradient.
    let mut painted = texture_init.painted.clone();
    let (th, tw) = painted.dim();
    for map in maps {
        for &t in map.iter() {
            if t >= 0 {
                painted[[t as usize / tw, t as usize % tw]] = true;
            }
        }
    }
    let _ = th;
    let initial_loss = trace[0];
    let final_loss = *trace.last().unwrap();
    Ok(JointOutcome {
        latents,
        texture: Texture {
            data: tex,
            painted,
        },
        trace,
        initial_loss,
        final_loss,
    })
}

/// Accumulates −sign(decoded − render)/N into the source texel of every
/// covered pixel (the gradient of mean-L1 with respect to fetched texels).
fn scatter_texture_grad(
    tex_grad: &mut Array3<f64>,
    map: &Array2<i64>,
    decoded: &Array3<f64>,
    render: &Array3<f64>,
) {
    let (h, w, c) = decoded.dim();
    let tw = tex_grad.dim().1;
    let n = (h * w * c) as f64;
    for py in 0..h {
        for px in 0..w {
            let t = map[[py, px]];
            if t < 0 {
                continue;
            }
            let (ty, tx) = (t as usize / tw, t as usize % tw);
            for ch in 0..c {
                let r = decoded[[py, px, ch]] - render[[py, px, ch]];
                let s = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                tex_grad[[ty, tx, ch]] -= s / n;
            }
        }
    }
}

/// Fills unpainted on-surface texels by repeated averaging of painted
/// 8-neighbors; texels whose centers are off-surface are left untouched.
pub fn dilate_unpainted(texture: &mut Texture, table: &TexelTable) {
    let (th, tw) = texture.painted.dim();
    for _ in 0..(th + tw) {
        let mut updates: Vec<(usize, usize, [f64; 3])> = Vec::new();
        for ty in 0..th {
            for tx in 0..tw {
                if texture.painted[[ty, tx]] || table.entry(tx, ty).is_none() {
                    continue;
                }
                let mut acc = [0.0; 3];
                let mut count = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        if dy == 0 && dx == 0 {
                            continue;
                        }
                        let (ny, nx) = (ty as i64 + dy, tx as i64 + dx);
                        if ny < 0 || nx < 0 || ny >= th as i64 || nx >= tw as i64 {
                            continue;
                        }
                        if texture.painted[[ny as usize, nx as usize]] {
                            for (ch, a) in acc.iter_mut().enumerate() {
                                *a += texture.data[[ny as usize, nx as usize, ch]];
                            }
                            count += 1.0;
                        }
                    }
                }
                if count > 0.0 {
                    updates.push((ty, tx, [acc[0] / count, acc[1] / count, acc[2] / count]));
                }
            }
        }
        if updates.is_empty() {
            break;
        }
        for (ty, tx, rgb) in updates {
            for (ch, v) in rgb.iter().enumerate() {
                texture.data[[ty, tx, ch]] = *v;
            }
            texture.painted[[ty, tx]] = true;
        }
    }
}
