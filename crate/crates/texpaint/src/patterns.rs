//! Procedural target textures.
//!
//! These serve as ground-truth textures for closed-form test backends: a
//! predictor anchored to a pattern should steer every chain toward it, and
//! the gap between the synthesized texture and the pattern is directly
//! measurable.

use ndarray::Array3;

use crate::error::{Error, Result};

/// A solid color.
pub fn constant(width: usize, height: usize, rgb: [f64; 3]) -> Array3<f64> {
    let mut tex = Array3::zeros((height, width, 3));
    for j in 0..height {
        for i in 0..width {
            for c in 0..3 {
                tex[[j, i, c]] = rgb[c];
            }
        }
    }
    tex
}

/// A left-to-right linear blend between two colors.
pub fn gradient(width: usize, height: usize, from: [f64; 3], to: [f64; 3]) -> Array3<f64> {
    let mut tex = Array3::zeros((height, width, 3));
    for j in 0..height {
        for i in 0..width {
            let t = if width > 1 {
                i as f64 / (width - 1) as f64
            } else {
                0.0
            };
            for c in 0..3 {
                tex[[j, i, c]] = from[c] * (1.0 - t) + to[c] * t;
            }
        }
    }
    tex
}

/// A checkerboard with square cells of `cell` texels.
pub fn checker(
    width: usize,
    height: usize,
    cell: usize,
    a: [f64; 3],
    b: [f64; 3],
) -> Array3<f64> {
    let cell = cell.max(1);
    let mut tex = Array3::zeros((height, width, 3));
    for j in 0..height {
        for i in 0..width {
            let pick = if ((i / cell) + (j / cell)) % 2 == 0 { a } else { b };
            for c in 0..3 {
                tex[[j, i, c]] = pick[c];
            }
        }
    }
    tex
}

fn parse_rgb(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!(
            "expected r,g,b but got {s:?}"
        )));
    }
    let mut rgb = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        rgb[i] = p
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad color component {p:?} in {s:?}")))?;
    }
    Ok(rgb)
}

/// Builds a pattern texture from a compact spec string.
///
/// Accepted forms:
/// - `constant:R,G,B`
/// - `gradient:R,G,B:R,G,B`
/// - `checker:CELL:R,G,B:R,G,B`
pub fn parse_pattern(spec: &str, width: usize, height: usize) -> Result<Array3<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        ["constant", rgb] => Ok(constant(width, height, parse_rgb(rgb)?)),
        ["gradient", from, to] => Ok(gradient(width, height, parse_rgb(from)?, parse_rgb(to)?)),
        ["checker", cell, a, b] => {
            let cell = cell
                .parse()
                .map_err(|_| Error::Config(format!("bad checker cell size {cell:?}")))?;
            Ok(checker(width, height, cell, parse_rgb(a)?, parse_rgb(b)?))
        }
        _ => Err(Error::Config(format!(
            "unknown pattern {spec:?}; expected constant:…, gradient:…, or checker:…"
        ))),
    }
}
