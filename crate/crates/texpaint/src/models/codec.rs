//! Latent/image codecs with exact gradient transport.
//!
//! The affine codec stands in for a learned autoencoder at desk scale: each
//! latent cell maps to a rectangular pixel patch through a shared seeded
//! basis with orthonormal columns, plus a seeded per-pixel bias. Because the
//! basis is orthonormal, the pseudo-inverse used by `encode` is just the
//! transpose, and `encode(decode(z)) = z` to machine precision. A smooth
//! pointwise nonlinearity can be layered on top to make the map non-affine
//! while keeping the adjoint exact; its `encode` inverts the decoder by
//! gradient descent through `decode_vjp`.

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::models::LatentCodec;
use crate::schedule::LatentGrid;

/// Identity codec: the latent is the image itself.
#[derive(Debug, Clone)]
pub struct IdentityCodec {
    shape: (usize, usize, usize),
}

impl IdentityCodec {
    /// A codec whose latent and image are both `(h, w, 3)`.
    pub fn new(image_size: (usize, usize)) -> Self {
        Self {
            shape: (image_size.0, image_size.1, 3),
        }
    }

    fn check(&self, dim: (usize, usize, usize), what: &str) -> Result<()> {
        if dim != self.shape {
            return Err(Error::ShapeMismatch(format!(
                "identity codec expects {:?} for {what}, got {:?}",
                self.shape, dim
            )));
        }
        Ok(())
    }
}

impl LatentCodec for IdentityCodec {
    fn latent_shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    fn image_shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    fn decode(&self, z: &LatentGrid) -> Result<Array3<f64>> {
        self.check(z.dim(), "decode")?;
        Ok(z.clone())
    }

    fn decode_vjp(&self, z: &LatentGrid, cotangent: &Array3<f64>) -> Result<LatentGrid> {
        self.check(z.dim(), "decode_vjp latent")?;
        self.check(cotangent.dim(), "decode_vjp cotangent")?;
        Ok(cotangent.clone())
    }

    fn encode(&self, image: &Array3<f64>) -> Result<LatentGrid> {
        self.check(image.dim(), "encode")?;
        Ok(image.clone())
    }
}

/// Optional pointwise nonlinearity applied after the affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecNonlinearity {
    /// Pure affine decode.
    None,
    /// `v + 0.2·tanh(v)`: smooth, strictly increasing, non-affine.
    Smooth,
}

fn phi(v: f64) -> f64 {
    v + 0.2 * v.tanh()
}

fn phi_prime(v: f64) -> f64 {
    let t = v.tanh();
    1.0 + 0.2 * (1.0 - t * t)
}

/// Block-local (optionally nonlinear) codec with a seeded orthonormal basis.
#[derive(Debug, Clone)]
pub struct AffineCodec {
    latent_shape: (usize, usize, usize),
    image_shape: (usize, usize, usize),
    /// Pixels per latent cell, `(rows, cols)`.
    scale: (usize, usize),
    /// `P×c` basis with orthonormal columns, `P = rows·cols·3`.
    basis: DMatrix<f64>,
    bias: Array3<f64>,
    nonlinearity: CodecNonlinearity,
    seed_used: u64,
}

/// Iterations and step size for the descent-based nonlinear encode.
const ENCODE_ITERS: usize = 120;
const ENCODE_LR: f64 = 0.5;

impl AffineCodec {
    /// Builds a codec mapping `latent_shape = (lh, lw, c)` to an RGB image
    /// of `image_size = (h, w)`; `h` and `w` must be integer multiples of
    /// `lh` and `lw`, and each cell's patch must have at least `c` values.
    ///
    /// The basis is drawn from the seed and orthonormalized; a seed whose
    /// draw is numerically rank-deficient is replaced by the next seed (see
    /// [`AffineCodec::seed_used`]).
    pub fn new(
        latent_shape: (usize, usize, usize),
        image_size: (usize, usize),
        seed: u64,
        nonlinearity: CodecNonlinearity,
    ) -> Result<Self> {
        let (lh, lw, lc) = latent_shape;
        let (ih, iw) = image_size;
        if lh == 0 || lw == 0 || lc == 0 || ih == 0 || iw == 0 {
            return Err(Error::Config("codec shapes must be nonzero".into()));
        }
        if ih % lh != 0 || iw % lw != 0 {
            return Err(Error::Config(format!(
                "image size {ih}x{iw} is not a multiple of latent size {lh}x{lw}"
            )));
        }
        let scale = (ih / lh, iw / lw);
        let patch = scale.0 * scale.1 * 3;
        if patch < lc {
            return Err(Error::Config(format!(
                "patch of {patch} values cannot carry {lc} latent channels"
            )));
        }
        let (basis, seed_used) = orthonormal_basis(patch, lc, seed);
        // The bias stream is drawn after the basis from the same generator
        // lineage so the whole codec is a function of one seed.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed_used.wrapping_add(0x9e3779b9));
        let mut bias = Array3::zeros((ih, iw, 3));
        for v in bias.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v = 0.5 + 0.05 * n;
        }
        Ok(Self {
            latent_shape,
            image_shape: (ih, iw, 3),
            scale,
            basis,
            bias,
            nonlinearity,
            seed_used,
        })
    }

    /// A square, exactly invertible configuration: the latent carries as
    /// many channels as its patch has values, so decode is a bijection.
    pub fn invertible(image_size: (usize, usize), scale: (usize, usize), seed: u64) -> Result<Self> {
        let (ih, iw) = image_size;
        if scale.0 == 0 || scale.1 == 0 || ih % scale.0 != 0 || iw % scale.1 != 0 {
            return Err(Error::Config(format!(
                "scale {scale:?} does not divide image size {ih}x{iw}"
            )));
        }
        let latent_shape = (ih / scale.0, iw / scale.1, scale.0 * scale.1 * 3);
        Self::new(latent_shape, image_size, seed, CodecNonlinearity::None)
    }

    /// Seed the basis was actually drawn from (differs from the requested
    /// seed only if a draw had to be replaced for rank deficiency).
    pub fn seed_used(&self) -> u64 {
        self.seed_used
    }

    /// Per-pixel bias term of the decoder.
    pub fn bias(&self) -> &Array3<f64> {
        &self.bias
    }

    /// Decode without the nonlinearity (the affine pre-activation).
    fn decode_pre(&self, z: &LatentGrid) -> Array3<f64> {
        let (lh, lw, lc) = self.latent_shape;
        let (sy, sx) = self.scale;
        let mut img = Array3::zeros(self.image_shape);
        for ly in 0..lh {
            for lx in 0..lw {
                let zc = DVector::from_fn(lc, |k, _| z[[ly, lx, k]]);
                let patch = &self.basis * zc;
                for dy in 0..sy {
                    for dx in 0..sx {
                        for c in 0..3 {
                            let (iy, ix) = (ly * sy + dy, lx * sx + dx);
                            img[[iy, ix, c]] =
                                patch[(dy * sx + dx) * 3 + c] + self.bias[[iy, ix, c]];
                        }
                    }
                }
            }
        }
        img
    }

    fn check_latent(&self, z: &LatentGrid) -> Result<()> {
        if z.dim() != self.latent_shape {
            return Err(Error::ShapeMismatch(format!(
                "codec expects latent {:?}, got {:?}",
                self.latent_shape,
                z.dim()
            )));
        }
        Ok(())
    }

    fn check_image(&self, x: &Array3<f64>) -> Result<()> {
        if x.dim() != self.image_shape {
            return Err(Error::ShapeMismatch(format!(
                "codec expects image {:?}, got {:?}",
                self.image_shape,
                x.dim()
            )));
        }
        Ok(())
    }
}

impl LatentCodec for AffineCodec {
    fn latent_shape(&self) -> (usize, usize, usize) {
        self.latent_shape
    }

    fn image_shape(&self) -> (usize, usize, usize) {
        self.image_shape
    }

    fn decode(&self, z: &LatentGrid) -> Result<Array3<f64>> {
        self.check_latent(z)?;
        let mut img = self.decode_pre(z);
        if self.nonlinearity == CodecNonlinearity::Smooth {
            for v in img.iter_mut() {
                *v = phi(*v);
            }
        }
        Ok(img)
    }

    fn decode_vjp(&self, z: &LatentGrid, cotangent: &Array3<f64>) -> Result<LatentGrid> {
        self.check_latent(z)?;
        self.check_image(cotangent)?;
        let (lh, lw, lc) = self.latent_shape;
        let (sy, sx) = self.scale;
        // The chain rule needs the pre-activation only in the nonlinear case.
        let pre = match self.nonlinearity {
            CodecNonlinearity::Smooth => Some(self.decode_pre(z)),
            CodecNonlinearity::None => None,
        };
        let mut out = Array3::zeros(self.latent_shape);
        for ly in 0..lh {
            for lx in 0..lw {
                let gp = DVector::from_fn(sy * sx * 3, |p, _| {
                    let (dy, rest) = (p / (sx * 3), p % (sx * 3));
                    let (dx, c) = (rest / 3, rest % 3);
                    let (iy, ix) = (ly * sy + dy, lx * sx + dx);
                    let g = cotangent[[iy, ix, c]];
                    match &pre {
                        Some(pre) => g * phi_prime(pre[[iy, ix, c]]),
                        None => g,
                    }
                });
                let zg = self.basis.transpose() * gp;
                for k in 0..lc {
                    out[[ly, lx, k]] = zg[k];
                }
            }
        }
        Ok(out)
    }

    fn encode(&self, image: &Array3<f64>) -> Result<LatentGrid> {
        self.check_image(image)?;
        let (lh, lw, lc) = self.latent_shape;
        let (sy, sx) = self.scale;
        // Affine least squares: with orthonormal columns the pseudo-inverse
        // is the transpose applied to the de-biased patch.
        let affine_encode = |img: &Array3<f64>| {
            let mut z = Array3::zeros(self.latent_shape);
            for ly in 0..lh {
                for lx in 0..lw {
                    let patch = DVector::from_fn(sy * sx * 3, |p, _| {
                        let (dy, rest) = (p / (sx * 3), p % (sx * 3));
                        let (dx, c) = (rest / 3, rest % 3);
                        let (iy, ix) = (ly * sy + dy, lx * sx + dx);
                        img[[iy, ix, c]] - self.bias[[iy, ix, c]]
                    });
                    let zc = self.basis.transpose() * patch;
                    for k in 0..lc {
                        z[[ly, lx, k]] = zc[k];
                    }
                }
            }
            z
        };
        match self.nonlinearity {
            CodecNonlinearity::None => Ok(affine_encode(image)),
            CodecNonlinearity::Smooth => {
                // Iterative inversion: descend ½‖decode(z) − image‖² through
                // the exact adjoint. The objective is well conditioned (the
                // basis is orthonormal and the slope of the nonlinearity lies
                // in [1, 1.2]), so plain gradient descent converges fast.
                let mut z = affine_encode(image);
                for _ in 0..ENCODE_ITERS {
                    let residual = self.decode(&z)? - image;
                    let grad = self.decode_vjp(&z, &residual)?;
                    let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
                    if gmax < 1e-13 {
                        break;
                    }
                    z = z - grad * ENCODE_LR;
                }
                Ok(z)
            }
        }
    }
}

/// Draws a `p×c` Gaussian matrix from the seed and orthonormalizes its
/// columns, retrying with incremented seeds while the draw is numerically
/// rank-deficient. Returns the basis and the seed that produced it.
fn orthonormal_basis(p: usize, c: usize, seed: u64) -> (DMatrix<f64>, u64) {
    let mut s = seed;
    loop {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s);
        let g: DMatrix<f64> = DMatrix::from_fn(p, c, |_, _| StandardNormal.sample(&mut rng));
        let qr = g.qr();
        let r = qr.r();
        let min_diag = (0..c).fold(f64::INFINITY, |m, i| m.min(r[(i, i)].abs()));
        if min_diag > 1e-8 {
            return (qr.q(), s);
        }
        s = s.wrapping_add(1);
    }
}
