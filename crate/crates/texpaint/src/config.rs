//! Run configuration: plain-text parsing, presets, validation, and
//! materialization into a runnable scene with backends.
//!
//! The format is flat `key = value` lines grouped under decorative
//! `[section]` headers; keys are globally unique so overrides can be given
//! as bare `key=value` strings. All randomness in a run flows from the
//! single `base_seed` knob.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::fusion::{JointOptConfig, LatentOptConfig};
use crate::geometry::{cube, icosphere, load_mesh, unit_quad, Mesh};
use crate::models::{
    view_oracle_predictors, AffineCodec, CodecNonlinearity, IdentityCodec, LatentCodec,
    NoisePredictor, PromptEmbedding, ToyDenoiser,
};
use crate::optim::AdamWConfig;
use crate::patterns::parse_pattern;
use crate::pipeline::{FusionMode, RunParams, Scene, SgdConfig};
use crate::render::sample_cameras;
use crate::schedule::NoiseSchedule;

/// Section headers accepted in config files; purely organizational.
const SECTIONS: [&str; 8] = [
    "run", "mesh", "texture", "cameras", "schedule", "backend", "prompt", "optimize",
];

/// Every knob of a synthesis run, as plain data. Obtain one through
/// [`parse_config`] (which applies defaults and validates) or a preset
/// constructor.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Mesh source: `quad`, `cube`, `icosphere:N`, or a path ending in `.obj`.
    pub mesh: String,
    /// Texture edge length in texels (square).
    pub texture_size: usize,
    /// Number of cameras on the orbit ring.
    pub cameras: usize,
    /// Orbit radius.
    pub radius: f64,
    /// Camera pitch above the horizontal plane, degrees.
    pub pitch_deg: f64,
    /// Vertical field of view, degrees.
    pub fov_y_deg: f64,
    /// Image edge length in pixels (square).
    pub image_size: usize,
    /// Length of the training schedule the sampler subsamples.
    pub train_steps: usize,
    /// Schedule beta at step 0.
    pub beta_min: f64,
    /// Schedule beta at the last training step.
    pub beta_max: f64,
    /// Number of sampling steps actually visited.
    pub steps: usize,
    /// Noise predictor: `toy` or `oracle:<pattern>` where `<pattern>` is a
    /// texture pattern spec such as `constant:0.2,0.4,0.6`.
    pub predictor: String,
    /// Re-targeting strength of oracle predictors, in (0, 1].
    pub oracle_strength: f64,
    /// Weight seed of the `toy` predictor.
    pub toy_seed: u64,
    /// Codec: `identity`, `affine`, `affine-smooth`, or `affine-invertible`.
    pub codec: String,
    /// Latent grid edge length (square); forced to `image_size` by the
    /// identity codec.
    pub latent_size: usize,
    /// Latent channel count; derived for the invertible codec.
    pub latent_channels: usize,
    /// Weight seed of affine codecs.
    pub codec_seed: u64,
    /// Prompt for camera set 0.
    pub prompt: String,
    /// Optional prompt for camera set 1; empty = single-prompt run.
    pub second_prompt: String,
    /// Camera indices assigned to the second prompt.
    pub second_prompt_cameras: Vec<usize>,
    /// Coupling mode name (see the pipeline's mode list).
    pub mode: String,
    /// DDIM stochasticity; 0 is the deterministic sampler.
    pub eta: f64,
    /// Guidance weight passed to the predictor.
    pub guidance: f64,
    /// Master seed; initial latents and stochastic draws derive from it.
    pub base_seed: u64,
    /// Per-step latent optimization iterations.
    pub opt_iterations: usize,
    /// Per-step latent optimization learning rate.
    pub opt_lr: f64,
    /// Whether the per-step conversion is the joint latent/texture
    /// fine-tune (main mode only).
    pub joint: bool,
    /// Joint fine-tune iterations.
    pub joint_iterations: usize,
    /// Joint fine-tune learning rate (latents and texture).
    pub joint_lr: f64,
    /// Final texture reconstruction iterations.
    pub sgd_iterations: usize,
    /// Final texture reconstruction learning rate.
    pub sgd_lr: f64,
}

impl RunConfig {
    /// Desk-scale defaults: small enough that a full run takes seconds.
    pub fn desk() -> Self {
        Self {
            mesh: "cube".into(),
            texture_size: 128,
            cameras: 4,
            radius: 1.5,
            pitch_deg: 30.0,
            fov_y_deg: 70.0,
            image_size: 64,
            train_steps: 1000,
            beta_min: 1e-4,
            beta_max: 0.02,
            steps: 10,
            predictor: "toy".into(),
            oracle_strength: 1.0,
            toy_seed: 7,
            codec: "affine".into(),
            latent_size: 16,
            latent_channels: 4,
            codec_seed: 11,
            prompt: "a textured object".into(),
            second_prompt: String::new(),
            second_prompt_cameras: Vec::new(),
            mode: "main".into(),
            eta: 0.0,
            guidance: 1.0,
            base_seed: 0,
            opt_iterations: 20,
            opt_lr: 0.01,
            joint: false,
            joint_iterations: 20,
            joint_lr: 0.01,
            sgd_iterations: 500,
            sgd_lr: 5e-4,
        }
    }

    /// The published full-scale settings: 8 cameras at radius 1.5 and 30°
    /// pitch with a 45° field of view, 512² images, 64×64×4 latents, 1024²
    /// texture, 35 sampling steps, 20 optimizer iterations at lr 0.01, and
    /// 500 reconstruction iterations.
    pub fn paper_scale() -> Self {
        Self {
            cameras: 8,
            fov_y_deg: 45.0,
            image_size: 512,
            texture_size: 1024,
            latent_size: 64,
            latent_channels: 4,
            steps: 35,
            ..Self::desk()
        }
    }

    /// Serializes the effective configuration; [`parse_config`] of the
    /// result reproduces `self` exactly.
    pub fn to_text(&self) -> String {
        let list = self
            .second_prompt_cameras
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "[run]\n\
             mode = {}\n\
             eta = {}\n\
             guidance = {}\n\
             base_seed = {}\n\
             \n\
             [mesh]\n\
             mesh = {}\n\
             \n\
             [texture]\n\
             texture_size = {}\n\
             \n\
             [cameras]\n\
             cameras = {}\n\
             radius = {}\n\
             pitch_deg = {}\n\
             fov_y_deg = {}\n\
             image_size = {}\n\
             \n\
             [schedule]\n\
             train_steps = {}\n\
             beta_min = {}\n\
             beta_max = {}\n\
             steps = {}\n\
             \n\
             [backend]\n\
             predictor = {}\n\
             oracle_strength = {}\n\
             toy_seed = {}\n\
             codec = {}\n\
             latent_size = {}\n\
             latent_channels = {}\n\
             codec_seed = {}\n\
             \n\
             [prompt]\n\
             prompt = {}\n\
             second_prompt = {}\n\
             second_prompt_cameras = {}\n\
             \n\
             [optimize]\n\
             opt_iterations = {}\n\
             opt_lr = {}\n\
             joint = {}\n\
             joint_iterations = {}\n\
             joint_lr = {}\n\
             sgd_iterations = {}\n\
             sgd_lr = {}\n",
            self.mode,
            self.eta,
            self.guidance,
            self.base_seed,
            self.mesh,
            self.texture_size,
            self.cameras,
            self.radius,
            self.pitch_deg,
            self.fov_y_deg,
            self.image_size,
            self.train_steps,
            self.beta_min,
            self.beta_max,
            self.steps,
            self.predictor,
            self.oracle_strength,
            self.toy_seed,
            self.codec,
            self.latent_size,
            self.latent_channels,
            self.codec_seed,
            self.prompt,
            self.second_prompt,
            list,
            self.opt_iterations,
            self.opt_lr,
            if self.joint { "on" } else { "off" },
            self.joint_iterations,
            self.joint_lr,
            self.sgd_iterations,
            self.sgd_lr,
        )
    }
}

fn key_err(key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("key `{key}`: {msg}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| key_err(key, format!("expected {what}, got `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "yes" => Ok(true),
        "off" | "false" | "no" => Ok(false),
        other => Err(key_err(key, format!("expected on/off, got `{other}`"))),
    }
}

fn parse_index_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s, "a camera index"))
        .collect()
}

/// Applies one `key = value` assignment; unknown keys are rejected by name.
fn apply_key(cfg: &mut RunConfig, seen: &mut BTreeSet<String>, key: &str, value: &str) -> Result<()> {
    if key == "preset" {
        *cfg = match value {
            "desk" => RunConfig::desk(),
            "paper-scale" => RunConfig::paper_scale(),
            other => {
                return Err(key_err(
                    key,
                    format!("unknown preset `{other}` (expected desk|paper-scale)"),
                ))
            }
        };
        // The preset re-bases everything, so earlier keys no longer count
        // as explicit choices.
        seen.clear();
        return Ok(());
    }
    match key {
        "mesh" => cfg.mesh = value.into(),
        "texture_size" => cfg.texture_size = parse_num(key, value, "an integer")?,
        "cameras" => cfg.cameras = parse_num(key, value, "an integer")?,
        "radius" => cfg.radius = parse_num(key, value, "a number")?,
        "pitch_deg" => cfg.pitch_deg = parse_num(key, value, "a number")?,
        "fov_y_deg" => cfg.fov_y_deg = parse_num(key, value, "a number")?,
        "image_size" => cfg.image_size = parse_num(key, value, "an integer")?,
        "train_steps" => cfg.train_steps = parse_num(key, value, "an integer")?,
        "beta_min" => cfg.beta_min = parse_num(key, value, "a number")?,
        "beta_max" => cfg.beta_max = parse_num(key, value, "a number")?,
        "steps" => cfg.steps = parse_num(key, value, "an integer")?,
        "predictor" => cfg.predictor = value.into(),
        "oracle_strength" => cfg.oracle_strength = parse_num(key, value, "a number")?,
        "toy_seed" => cfg.toy_seed = parse_num(key, value, "an integer")?,
        "codec" => cfg.codec = value.into(),
        "latent_size" => cfg.latent_size = parse_num(key, value, "an integer")?,
        "latent_channels" => cfg.latent_channels = parse_num(key, value, "an integer")?,
        "codec_seed" => cfg.codec_seed = parse_num(key, value, "an integer")?,
        "prompt" => cfg.prompt = value.into(),
        "second_prompt" => cfg.second_prompt = value.into(),
        "second_prompt_cameras" => cfg.second_prompt_cameras = parse_index_list(key, value)?,
        "mode" => cfg.mode = value.into(),
        "eta" => cfg.eta = parse_num(key, value, "a number")?,
        "guidance" => cfg.guidance = parse_num(key, value, "a number")?,
        "base_seed" => cfg.base_seed = parse_num(key, value, "an integer")?,
        "opt_iterations" => cfg.opt_iterations = parse_num(key, value, "an integer")?,
        "opt_lr" => cfg.opt_lr = parse_num(key, value, "a number")?,
        "joint" => cfg.joint = parse_bool(key, value)?,
        "joint_iterations" => cfg.joint_iterations = parse_num(key, value, "an integer")?,
        "joint_lr" => cfg.joint_lr = parse_num(key, value, "a number")?,
        "sgd_iterations" => cfg.sgd_iterations = parse_num(key, value, "an integer")?,
        "sgd_lr" => cfg.sgd_lr = parse_num(key, value, "a number")?,
        other => return Err(Error::Config(format!("unknown key `{other}`"))),
    }
    seen.insert(key.into());
    Ok(())
}

/// Resolves codec-dependent latent defaults and checks every constraint,
/// naming the offending key on failure. `seen` lists explicitly assigned
/// keys so only real conflicts are reported.
fn finalize(cfg: &mut RunConfig, seen: &BTreeSet<String>) -> Result<()> {
    if cfg.cameras == 0 {
        return Err(key_err("cameras", "at least one camera is required"));
    }
    if cfg.texture_size == 0 {
        return Err(key_err("texture_size", "must be positive"));
    }
    if cfg.image_size == 0 {
        return Err(key_err("image_size", "must be positive"));
    }
    if !(cfg.fov_y_deg > 0.0 && cfg.fov_y_deg < 180.0) {
        return Err(key_err("fov_y_deg", "must lie in (0, 180)"));
    }
    if !(cfg.radius.is_finite() && cfg.radius > 0.0) {
        return Err(key_err("radius", "must be positive"));
    }
    if cfg.steps == 0 {
        return Err(key_err("steps", "at least one sampling step is required"));
    }
    if cfg.steps > cfg.train_steps {
        return Err(key_err(
            "steps",
            format!(
                "cannot visit {} steps of a {}-step schedule",
                cfg.steps, cfg.train_steps
            ),
        ));
    }
    if !(cfg.beta_min > 0.0 && cfg.beta_min <= cfg.beta_max && cfg.beta_max < 1.0) {
        return Err(key_err(
            "beta_min",
            "betas must satisfy 0 < beta_min <= beta_max < 1 (see also `beta_max`)",
        ));
    }
    if !(cfg.eta >= 0.0 && cfg.eta.is_finite()) {
        return Err(key_err("eta", "must be a finite number >= 0"));
    }
    if !cfg.guidance.is_finite() {
        return Err(key_err("guidance", "must be finite"));
    }
    let mode =
        FusionMode::parse(&cfg.mode).map_err(|e| key_err("mode", e))?;
    if cfg.joint && mode != FusionMode::Main {
        return Err(key_err(
            "joint",
            "the joint fine-tune requires mode = main",
        ));
    }
    if cfg.prompt.is_empty() {
        return Err(key_err("prompt", "must not be empty"));
    }
    if cfg.second_prompt.is_empty() != cfg.second_prompt_cameras.is_empty() {
        return Err(key_err(
            "second_prompt_cameras",
            "`second_prompt` and `second_prompt_cameras` must be set together",
        ));
    }
    for &i in &cfg.second_prompt_cameras {
        if i >= cfg.cameras {
            return Err(key_err(
                "second_prompt_cameras",
                format!("camera index {i} out of range for {} cameras", cfg.cameras),
            ));
        }
    }
    if !(cfg.oracle_strength > 0.0 && cfg.oracle_strength <= 1.0) {
        return Err(key_err("oracle_strength", "must lie in (0, 1]"));
    }

    // Mesh spec shape (existence of file paths is checked on use).
    match cfg.mesh.as_str() {
        "quad" | "cube" => {}
        s if s.starts_with("icosphere:") => {
            let n: usize = parse_num("mesh", &s["icosphere:".len()..], "a subdivision count")?;
            if n > 6 {
                return Err(key_err("mesh", "icosphere subdivision capped at 6"));
            }
        }
        s if s.ends_with(".obj") => {}
        other => {
            return Err(key_err(
                "mesh",
                format!("unknown mesh `{other}` (expected quad|cube|icosphere:N|<path>.obj)"),
            ))
        }
    }

    // Predictor spec shape; oracle patterns are parsed against a probe size.
    if cfg.predictor != "toy" {
        match cfg.predictor.strip_prefix("oracle:") {
            Some(pattern) => {
                parse_pattern(pattern, 8, 8).map_err(|e| key_err("predictor", e))?;
            }
            None => {
                return Err(key_err(
                    "predictor",
                    format!(
                        "unknown predictor `{}` (expected toy|oracle:<pattern>)",
                        cfg.predictor
                    ),
                ))
            }
        }
    }

    // Codec constraints; the identity codec pins the latent grid to the
    // image and the invertible codec determines its own channel count.
    match cfg.codec.as_str() {
        "identity" => {
            if seen.contains("latent_size") && cfg.latent_size != cfg.image_size {
                return Err(key_err(
                    "latent_size",
                    format!(
                        "the identity codec requires latent_size = image_size ({})",
                        cfg.image_size
                    ),
                ));
            }
            if seen.contains("latent_channels") && cfg.latent_channels != 3 {
                return Err(key_err(
                    "latent_channels",
                    "the identity codec requires latent_channels = 3",
                ));
            }
            cfg.latent_size = cfg.image_size;
            cfg.latent_channels = 3;
        }
        "affine" | "affine-smooth" | "affine-invertible" => {
            if cfg.latent_size == 0 || cfg.image_size % cfg.latent_size != 0 {
                return Err(key_err(
                    "latent_size",
                    format!("must evenly divide image_size ({})", cfg.image_size),
                ));
            }
            let scale = cfg.image_size / cfg.latent_size;
            let patch = scale * scale * 3;
            if cfg.codec == "affine-invertible" {
                if seen.contains("latent_channels") && cfg.latent_channels != patch {
                    return Err(key_err(
                        "latent_channels",
                        format!("the invertible codec at this scale requires {patch} channels"),
                    ));
                }
                cfg.latent_channels = patch;
            } else if cfg.latent_channels == 0 || cfg.latent_channels > patch {
                return Err(key_err(
                    "latent_channels",
                    format!("must lie in 1..={patch} for {scale}x downsampling"),
                ));
            }
        }
        other => {
            return Err(key_err(
                "codec",
                format!(
                    "unknown codec `{other}` (expected identity|affine|affine-smooth|affine-invertible)"
                ),
            ))
        }
    }
    Ok(())
}

/// Parses a config text, applies `overrides` (bare `key=value` strings) on
/// top, and validates. An empty text yields the desk-scale defaults.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::desk();
    let mut seen = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| {
                Error::Config(format!("line {}: malformed section header `{line}`", idx + 1))
            })?;
            if !SECTIONS.contains(&name) {
                return Err(Error::Config(format!("unknown section `[{name}]`")));
            }
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("line {}: expected `key = value`, got `{line}`", idx + 1))
        })?;
        apply_key(&mut cfg, &mut seen, key.trim(), value.trim())?;
    }
    for ov in overrides {
        let (key, value) = ov.split_once('=').ok_or_else(|| {
            Error::Config(format!("override `{ov}`: expected `key=value`"))
        })?;
        apply_key(&mut cfg, &mut seen, key.trim(), value.trim())?;
    }
    finalize(&mut cfg, &seen)?;
    Ok(cfg)
}

/// Reads and parses a config file. A missing or unreadable file is an error
/// naming the path.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("config file `{}`: {e}", path.display())))?;
    parse_config(&text, overrides)
}

/// A validated config turned into the objects a run needs.
pub struct Materialized {
    /// Precomputed geometry and visibility.
    pub scene: Scene,
    /// The sampling schedule.
    pub schedule: NoiseSchedule,
    /// The latent↔color codec.
    pub codec: Box<dyn LatentCodec>,
    /// One noise predictor per camera.
    pub predictors: Vec<Arc<dyn NoisePredictor>>,
    /// Run-time knobs for the pipeline.
    pub params: RunParams,
    /// The texture oracle predictors steer toward, when one exists.
    pub oracle_target: Option<Array3<f64>>,
}

/// Builds the mesh named by a config. File paths are checked for existence
/// so the error names the missing file.
pub fn build_mesh(spec: &str) -> Result<Mesh> {
    match spec {
        "quad" => Ok(unit_quad()),
        "cube" => Ok(cube()),
        s if s.starts_with("icosphere:") => {
            let n: usize = parse_num("mesh", &s["icosphere:".len()..], "a subdivision count")?;
            Ok(icosphere(n))
        }
        path => {
            let p = Path::new(path);
            if !p.exists() {
                return Err(Error::Config(format!("mesh file `{path}` not found")));
            }
            load_mesh(p)
        }
    }
}

/// Derives the re-noising seed from the master seed so one knob controls
/// all randomness while the two streams stay distinct.
pub fn derive_noise_seed(base_seed: u64) -> u64 {
    base_seed ^ 0x9E37_79B9_7F4A_7C15
}

/// Constructs scene, schedule, codec, predictors, and run parameters from a
/// validated config.
pub fn materialize(cfg: &RunConfig) -> Result<Materialized> {
    let mesh = build_mesh(&cfg.mesh)?;
    let cameras = sample_cameras(
        cfg.cameras,
        cfg.radius,
        cfg.pitch_deg,
        cfg.fov_y_deg,
        (cfg.image_size, cfg.image_size),
    );
    let schedule = NoiseSchedule::linear(cfg.train_steps, cfg.beta_min, cfg.beta_max, cfg.steps)?;

    let image = (cfg.image_size, cfg.image_size);
    let latent = (cfg.latent_size, cfg.latent_size, cfg.latent_channels);
    let codec: Box<dyn LatentCodec> = match cfg.codec.as_str() {
        "identity" => Box::new(IdentityCodec::new(image)),
        "affine" => Box::new(AffineCodec::new(
            latent,
            image,
            cfg.codec_seed,
            CodecNonlinearity::None,
        )?),
        "affine-smooth" => Box::new(AffineCodec::new(
            latent,
            image,
            cfg.codec_seed,
            CodecNonlinearity::Smooth,
        )?),
        "affine-invertible" => {
            let scale = cfg.image_size / cfg.latent_size;
            Box::new(AffineCodec::invertible(image, (scale, scale), cfg.codec_seed)?)
        }
        other => return Err(key_err("codec", format!("unknown codec `{other}`"))),
    };

    let (lh, lw, _) = codec.latent_shape();
    let scene = Scene::build(
        mesh,
        cameras,
        (cfg.texture_size, cfg.texture_size),
        (lh, lw),
    )?;

    let (predictors, oracle_target) = if cfg.predictor == "toy" {
        let toy: Arc<dyn NoisePredictor> =
            Arc::new(ToyDenoiser::new(cfg.toy_seed, codec.latent_shape()));
        (vec![toy; cfg.cameras], None)
    } else {
        let pattern = cfg.predictor.strip_prefix("oracle:").ok_or_else(|| {
            key_err("predictor", format!("unknown predictor `{}`", cfg.predictor))
        })?;
        let target = parse_pattern(pattern, cfg.texture_size, cfg.texture_size)?;
        let predictors = view_oracle_predictors(
            &schedule,
            codec.as_ref(),
            &target,
            &scene.mesh,
            &scene.table,
            &scene.cameras,
            cfg.oracle_strength,
        )?;
        (predictors, Some(target))
    };

    let mut prompts = vec![PromptEmbedding::from_text(&cfg.prompt)];
    let mut prompt_of_camera = vec![0; cfg.cameras];
    if !cfg.second_prompt.is_empty() {
        prompts.push(PromptEmbedding::from_text(&cfg.second_prompt));
        for &i in &cfg.second_prompt_cameras {
            prompt_of_camera[i] = 1;
        }
    }

    let params = RunParams {
        mode: FusionMode::parse(&cfg.mode)?,
        eta: cfg.eta,
        guidance_weight: cfg.guidance,
        base_seed: cfg.base_seed,
        noise_seed: derive_noise_seed(cfg.base_seed),
        latent_opt: LatentOptConfig {
            iterations: cfg.opt_iterations,
            adamw: AdamWConfig {
                lr: cfg.opt_lr,
                ..AdamWConfig::default()
            },
        },
        joint_opt: cfg.joint.then(|| JointOptConfig {
            iterations: cfg.joint_iterations,
            latent_adamw: AdamWConfig {
                lr: cfg.joint_lr,
                ..AdamWConfig::default()
            },
            texture_adamw: AdamWConfig {
                lr: cfg.joint_lr,
                ..AdamWConfig::default()
            },
        }),
        sgd: SgdConfig {
            iterations: cfg.sgd_iterations,
            lr: cfg.sgd_lr,
        },
        prompts,
        prompt_of_camera,
    };

    Ok(Materialized {
        scene,
        schedule,
        codec,
        predictors,
        params,
        oracle_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        parse_config(text, &[])
    }

    #[test]
    fn empty_config_is_the_desk_preset() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg.cameras, 4);
        assert_eq!(cfg.image_size, 64);
        assert_eq!(cfg.texture_size, 128);
        assert_eq!(cfg.latent_size, 16);
        assert_eq!(cfg.latent_channels, 4);
        assert_eq!(cfg.steps, 10);
        assert_eq!(cfg, RunConfig::desk());
    }

    #[test]
    fn paper_preset_matches_published_settings() {
        let cfg = parse("preset = paper-scale").unwrap();
        assert_eq!(cfg.cameras, 8);
        assert_eq!(cfg.radius, 1.5);
        assert_eq!(cfg.fov_y_deg, 45.0);
        assert_eq!(cfg.pitch_deg, 30.0);
        assert_eq!(cfg.steps, 35);
        assert_eq!(cfg.opt_iterations, 20);
        assert_eq!(cfg.opt_lr, 0.01);
        assert_eq!(cfg.sgd_iterations, 500);
        assert_eq!(cfg.image_size, 512);
        assert_eq!(cfg.latent_size, 64);
        assert_eq!(cfg.latent_channels, 4);
        assert_eq!(cfg.texture_size, 1024);
    }

    #[test]
    fn keys_after_a_preset_still_apply() {
        let cfg = parse("preset = paper-scale\ncameras = 3").unwrap();
        assert_eq!(cfg.cameras, 3);
        assert_eq!(cfg.steps, 35);
    }

    #[test]
    fn overrides_win_over_file_values() {
        let cfg = parse_config("cameras = 2\n", &["cameras=3".into()]).unwrap();
        assert_eq!(cfg.cameras, 3);
        let echo = cfg.to_text();
        assert!(echo.contains("cameras = 3\n"));
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected_by_name() {
        let err = parse("coolness = 11\n").unwrap_err().to_string();
        assert!(err.contains("coolness"), "{err}");
        let err = parse("[alchemy]\n").unwrap_err().to_string();
        assert!(err.contains("alchemy"), "{err}");
        let err = parse_config("", &["sparkle=1".into()]).unwrap_err().to_string();
        assert!(err.contains("sparkle"), "{err}");
    }

    #[test]
    fn type_errors_name_the_offending_key() {
        let err = parse("cameras = many\n").unwrap_err().to_string();
        assert!(err.contains("cameras"), "{err}");
        let err = parse("eta = soon\n").unwrap_err().to_string();
        assert!(err.contains("eta"), "{err}");
        let err = parse("joint = maybe\n").unwrap_err().to_string();
        assert!(err.contains("joint"), "{err}");
    }

    #[test]
    fn constraint_violations_name_the_key() {
        for (text, key) in [
            ("cameras = 0", "cameras"),
            ("eta = -1", "eta"),
            ("steps = 2000", "steps"),
            ("beta_min = 0", "beta_min"),
            ("mode = sideways", "mode"),
            ("joint = on\nmode = independent", "joint"),
            ("second_prompt = wood", "second_prompt_cameras"),
            ("second_prompt = wood\nsecond_prompt_cameras = 9", "second_prompt_cameras"),
            ("mesh = teapot", "mesh"),
            ("predictor = psychic", "predictor"),
            ("codec = zip", "codec"),
            ("latent_size = 7", "latent_size"),
            ("oracle_strength = 0", "oracle_strength"),
        ] {
            let err = parse(text).unwrap_err().to_string();
            assert!(err.contains(key), "`{text}` gave `{err}`, expected `{key}`");
        }
    }

    #[test]
    fn the_effective_config_echo_round_trips() {
        let cfg = parse(
            "preset = paper-scale\n\
             mesh = icosphere:2\n\
             predictor = oracle:checker:8:0.9,0.1,0.1:0.1,0.1,0.9\n\
             second_prompt = mossy stone\n\
             second_prompt_cameras = 1,3\n\
             joint = on\n\
             eta = 0.25\n\
             sgd_lr = 0.0005\n",
        )
        .unwrap();
        let again = parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn identity_codec_pins_the_latent_shape() {
        let cfg = parse("codec = identity\n").unwrap();
        assert_eq!(cfg.latent_size, cfg.image_size);
        assert_eq!(cfg.latent_channels, 3);

        let err = parse("codec = identity\nlatent_size = 16\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("latent_size"), "{err}");
    }

    #[test]
    fn invertible_codec_derives_its_channel_count() {
        let cfg = parse("codec = affine-invertible\nlatent_size = 8\nimage_size = 16\n").unwrap();
        assert_eq!(cfg.latent_channels, 2 * 2 * 3);

        let err = parse(
            "codec = affine-invertible\nlatent_size = 8\nimage_size = 16\nlatent_channels = 4\n",
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("latent_channels"), "{err}");
    }

    #[test]
    fn comments_blanks_and_sections_are_ignored() {
        let cfg = parse(
            "# a comment\n\
             \n\
             [cameras]\n\
             cameras = 6\n\
             [schedule]\n\
             steps = 4\n",
        )
        .unwrap();
        assert_eq!(cfg.cameras, 6);
        assert_eq!(cfg.steps, 4);
    }

    #[test]
    fn missing_mesh_files_are_named() {
        let err = build_mesh("/no/such/dir/missing.obj").unwrap_err().to_string();
        assert!(err.contains("missing.obj"), "{err}");
    }

    #[test]
    fn materialize_builds_a_runnable_scene() {
        let cfg = parse(
            "mesh = quad\n\
             cameras = 2\n\
             image_size = 16\n\
             texture_size = 24\n\
             codec = identity\n\
             predictor = oracle:constant:0.2,0.5,0.8\n\
             steps = 3\n",
        )
        .unwrap();
        let m = materialize(&cfg).unwrap();
        assert_eq!(m.scene.cameras.len(), 2);
        assert_eq!(m.scene.texture_size(), (24, 24));
        assert_eq!(m.predictors.len(), 2);
        assert_eq!(m.codec.latent_shape(), (16, 16, 3));
        assert_eq!(m.schedule.visited().len(), 3);
        assert_eq!(m.params.prompt_of_camera, vec![0, 0]);
        let target = m.oracle_target.unwrap();
        assert_eq!(target.dim(), (24, 24, 3));
        assert!((target[[5, 9, 1]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn second_prompt_assignments_reach_the_params() {
        let cfg = parse(
            "cameras = 4\nsecond_prompt = mossy stone\nsecond_prompt_cameras = 1,3\n",
        )
        .unwrap();
        let m = materialize(&cfg).unwrap();
        assert_eq!(m.params.prompts.len(), 2);
        assert_eq!(m.params.prompt_of_camera, vec![0, 1, 0, 1]);
        assert_eq!(m.oracle_target, None);
    }

    #[test]
    fn noise_seed_derivation_is_seed_dependent() {
        assert_ne!(derive_noise_seed(0), 0);
        assert_ne!(derive_noise_seed(1), derive_noise_seed(2));
    }
}
