//! Noise schedules and the forward / reverse diffusion steps.
//!
//! Timesteps are array indices `0..train_steps`; index 0 is the least-noised
//! step (`alpha_bar` close to 1) and `train_steps - 1` the most-noised one. A
//! run visits an evenly spaced ascending subsequence of indices that always
//! contains the largest index; chains walk the subsequence downwards and the
//! clean prediction at the lowest visited index is the chain's output.

use ndarray::Array3;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// A dense grid of latent values, indexed `(row, col, channel)`.
pub type LatentGrid = Array3<f64>;

/// Per-view latent grids at one conceptual timestep.
pub type LatentStack = Vec<LatentGrid>;

/// Precomputed diffusion schedule: per-index `beta`, `alpha = 1 - beta`,
/// cumulative `alpha_bar`, and the visited subsequence for sampling.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
    visited: Vec<usize>,
}

impl NoiseSchedule {
    /// Builds a schedule with betas ramping linearly from `beta_min` to
    /// `beta_max` over `train_steps` indices, visiting `num_steps` of them.
    pub fn linear(
        train_steps: usize,
        beta_min: f64,
        beta_max: f64,
        num_steps: usize,
    ) -> Result<Self> {
        if train_steps < 1 {
            return Err(Error::InvalidSchedule("train_steps must be >= 1".into()));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::InvalidSchedule(format!(
                "need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let betas = (0..train_steps)
            .map(|i| {
                if train_steps == 1 {
                    beta_min
                } else {
                    beta_min + (beta_max - beta_min) * i as f64 / (train_steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas, num_steps)
    }

    /// Builds a schedule from explicit per-index betas in `[0, 1)`.
    pub fn from_betas(betas: Vec<f64>, num_steps: usize) -> Result<Self> {
        let train_steps = betas.len();
        if train_steps < 1 {
            return Err(Error::InvalidSchedule("empty beta table".into()));
        }
        if num_steps < 1 || num_steps > train_steps {
            return Err(Error::InvalidSchedule(format!(
                "num_steps must be in 1..={train_steps}, got {num_steps}"
            )));
        }
        for (i, b) in betas.iter().enumerate() {
            if !(*b >= 0.0 && *b < 1.0) {
                return Err(Error::InvalidSchedule(format!(
                    "beta[{i}] = {b} outside [0, 1)"
                )));
            }
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(train_steps);
        let mut prod = 1.0;
        for a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        // Evenly spaced visited indices, ascending, always including the
        // largest index. num_steps == train_steps yields the identity.
        let visited = if num_steps == 1 {
            vec![train_steps - 1]
        } else {
            (0..num_steps)
                .map(|k| {
                    ((train_steps - 1) as f64 * k as f64 / (num_steps - 1) as f64).round() as usize
                })
                .collect()
        };
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
            visited,
        })
    }

    /// Number of trained timestep indices.
    pub fn train_steps(&self) -> usize {
        self.betas.len()
    }

    /// Per-index noise increment.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t]
    }

    /// `1 - beta(t)`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    /// Cumulative product of alphas through index `t`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// Ascending visited indices; the last entry is `train_steps - 1`.
    pub fn visited(&self) -> &[usize] {
        &self.visited
    }

    /// DDIM noise scale for stepping `t -> t_prev` with stochasticity `eta`.
    ///
    /// `eta = 0` gives the deterministic sampler; for consecutive indices
    /// `eta = 1` reproduces the ancestral variance
    /// `(1 - alpha_bar[t-1]) / (1 - alpha_bar[t]) * beta[t]`.
    pub fn sigma(&self, t: usize, t_prev: usize, eta: f64) -> f64 {
        assert!(t_prev < t, "t_prev must precede t");
        let ab_t = self.alpha_bar(t);
        let ab_prev = self.alpha_bar(t_prev);
        eta * ((1.0 - ab_prev) / (1.0 - ab_t)).sqrt() * (1.0 - ab_t / ab_prev).sqrt()
    }

    /// Plain-text table of the schedule for inspection.
    pub fn to_table(&self) -> String {
        let visited: std::collections::BTreeSet<usize> = self.visited.iter().copied().collect();
        let mut out = String::from("t\tbeta\talpha\talpha_bar\tvisited\n");
        for t in 0..self.train_steps() {
            out.push_str(&format!(
                "{t}\t{:.10}\t{:.10}\t{:.10e}\t{}\n",
                self.betas[t],
                self.alphas[t],
                self.alpha_bars[t],
                if visited.contains(&t) { 1 } else { 0 }
            ));
        }
        out
    }
}

/// Draws a grid of independent standard normal samples in row-major order.
pub fn sample_standard_normal<R: Rng>(shape: (usize, usize, usize), rng: &mut R) -> LatentGrid {
    let n = shape.0 * shape.1 * shape.2;
    let data: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Array3::from_shape_vec(shape, data).expect("shape/data length agree")
}

/// Forward noising: `z_t = sqrt(alpha_bar_t) z0 + sqrt(1 - alpha_bar_t) eps`
/// with `eps` drawn elementwise from the given RNG in row-major order.
pub fn forward_noise<R: Rng>(
    z0: &LatentGrid,
    t: usize,
    s: &NoiseSchedule,
    rng: &mut R,
) -> LatentGrid {
    let ab = s.alpha_bar(t);
    let eps = sample_standard_normal(z0.dim(), rng);
    let mut out = z0.clone();
    out.zip_mut_with(&eps, |z, e| *z = ab.sqrt() * *z + (1.0 - ab).sqrt() * *e);
    out
}

/// Noiseless prediction: `z0_hat = (z_t - sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_bar_t)`.
pub fn ddim_predict_z0(z_t: &LatentGrid, eps: &LatentGrid, t: usize, s: &NoiseSchedule) -> LatentGrid {
    assert_eq!(z_t.dim(), eps.dim(), "latent/noise shape mismatch");
    let ab = s.alpha_bar(t);
    let mut out = z_t.clone();
    out.zip_mut_with(eps, |z, e| *z = (*z - (1.0 - ab).sqrt() * *e) / ab.sqrt());
    out
}

/// Deterministic part of the DDIM transition built from an explicit clean
/// prediction: `sqrt(ab_prev) z0 + sqrt(1 - ab_prev - sigma^2) eps`.
///
/// This is the form the coupled pipeline uses, with `z0` replaced by the
/// re-optimized clean latent while `eps` stays the prediction made at `t`.
pub fn ddim_step_from_clean(
    z0: &LatentGrid,
    eps: &LatentGrid,
    t_prev: usize,
    s: &NoiseSchedule,
    sigma: f64,
) -> Result<LatentGrid> {
    assert_eq!(z0.dim(), eps.dim(), "latent/noise shape mismatch");
    let ab_prev = s.alpha_bar(t_prev);
    let rem = 1.0 - ab_prev - sigma * sigma;
    if rem < 0.0 {
        return Err(Error::SigmaTooLarge {
            t_prev,
            sigma_sq: sigma * sigma,
            limit: 1.0 - ab_prev,
        });
    }
    let mut out = z0.clone();
    out.zip_mut_with(eps, |z, e| *z = ab_prev.sqrt() * *z + rem.sqrt() * *e);
    Ok(out)
}

/// One DDIM transition `t -> t_prev`.
///
/// With `eta = 0` the step is fully deterministic; otherwise seeded noise
/// scaled by [`NoiseSchedule::sigma`] is added from `rng`.
pub fn ddim_step<R: Rng>(
    z_t: &LatentGrid,
    eps: &LatentGrid,
    t: usize,
    t_prev: usize,
    s: &NoiseSchedule,
    eta: f64,
    rng: &mut R,
) -> Result<LatentGrid> {
    let z0 = ddim_predict_z0(z_t, eps, t, s);
    let sigma = s.sigma(t, t_prev, eta);
    let mut out = ddim_step_from_clean(&z0, eps, t_prev, s, sigma)?;
    if sigma > 0.0 {
        let noise = sample_standard_normal(z_t.dim(), rng);
        out.zip_mut_with(&noise, |z, n| *z += sigma * *n);
    }
    Ok(out)
}

/// Posterior mean of the ancestral (DDPM) transition `t -> t_prev`.
///
/// For consecutive indices this is
/// `(z_t - beta_t / sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_t)`; for a
/// respaced jump the single-step `beta` generalizes to
/// `1 - alpha_bar_t / alpha_bar_prev`.
pub fn ddpm_mean(
    z_t: &LatentGrid,
    eps: &LatentGrid,
    t: usize,
    t_prev: usize,
    s: &NoiseSchedule,
) -> LatentGrid {
    assert_eq!(z_t.dim(), eps.dim(), "latent/noise shape mismatch");
    assert!(t_prev < t, "t_prev must precede t");
    let ab_t = s.alpha_bar(t);
    let ab_prev = s.alpha_bar(t_prev);
    let beta_eff = 1.0 - ab_t / ab_prev;
    let alpha_eff = ab_t / ab_prev;
    let mut out = z_t.clone();
    out.zip_mut_with(eps, |z, e| {
        *z = (*z - beta_eff / (1.0 - ab_t).sqrt() * *e) / alpha_eff.sqrt()
    });
    out
}

/// One ancestral (DDPM) transition with variance `beta` (std `sqrt(beta)`).
pub fn ddpm_step<R: Rng>(
    z_t: &LatentGrid,
    eps: &LatentGrid,
    t: usize,
    t_prev: usize,
    s: &NoiseSchedule,
    rng: &mut R,
) -> LatentGrid {
    let mut out = ddpm_mean(z_t, eps, t, t_prev, s);
    let ab_t = s.alpha_bar(t);
    let ab_prev = s.alpha_bar(t_prev);
    let beta_eff = 1.0 - ab_t / ab_prev;
    if beta_eff > 0.0 {
        let noise = sample_standard_normal(z_t.dim(), rng);
        out.zip_mut_with(&noise, |z, n| *z += beta_eff.sqrt() * *n);
    }
    out
}

/// Deterministic mean of the DDIM transition for a given `sigma`, exposed so
/// the DDPM/DDIM coincidence property can be checked without sampling noise.
pub fn ddim_mean(
    z_t: &LatentGrid,
    eps: &LatentGrid,
    t: usize,
    t_prev: usize,
    s: &NoiseSchedule,
    sigma: f64,
) -> Result<LatentGrid> {
    let z0 = ddim_predict_z0(z_t, eps, t, s);
    ddim_step_from_clean(&z0, eps, t_prev, s, sigma)
}
