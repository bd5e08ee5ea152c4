//! Reading and writing image and table artifacts.
//!
//! Color images are exchanged as 8-bit RGB PNGs; depth maps as 16-bit
//! grayscale PNGs normalized over their finite range, with the range stored
//! in a small text sidecar so values can be recovered.

use std::path::{Path, PathBuf};

use image::{GrayImage, ImageReader, Luma, Rgb, RgbImage};
use ndarray::{Array2, Array3};

use crate::error::{Error, Result};

/// Writes an `(h, w, 3)` grid of [0, 1] floats as an 8-bit RGB PNG.
///
/// Values are clamped before quantization.
pub fn write_rgb_png(path: &Path, pixels: &Array3<f64>) -> Result<()> {
    let (h, w, c) = pixels.dim();
    if c != 3 {
        return Err(Error::ShapeMismatch(format!(
            "expected 3 channels for an RGB image, got {c}"
        )));
    }
    let mut img = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let quant = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put_pixel(
                x as u32,
                y as u32,
                Rgb([
                    quant(pixels[[y, x, 0]]),
                    quant(pixels[[y, x, 1]]),
                    quant(pixels[[y, x, 2]]),
                ]),
            );
        }
    }
    img.save(path)?;
    Ok(())
}

/// Reads an RGB PNG back into an `(h, w, 3)` grid of [0, 1] floats.
pub fn read_rgb_png(path: &Path) -> Result<Array3<f64>> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::ImageIo(format!("{}: {e}", path.display())))?
        .decode()?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let mut out = Array3::zeros((h as usize, w as usize, 3));
    for y in 0..h {
        for x in 0..w {
            let p = img.get_pixel(x, y);
            for ch in 0..3 {
                out[[y as usize, x as usize, ch]] = p.0[ch] as f64 / 255.0;
            }
        }
    }
    Ok(out)
}

/// Sidecar path holding the value range of a normalized depth PNG.
fn range_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".range.txt");
    PathBuf::from(s)
}

/// Writes a depth map as an 8-bit grayscale PNG, dark = near.
///
/// Finite distances are normalized over their range (recorded in a
/// `<path>.range.txt` sidecar as `min max`); misses render as white.
pub fn write_depth_png(path: &Path, dist: &Array2<f64>) -> Result<()> {
    let (h, w) = dist.dim();
    let finite: Vec<f64> = dist.iter().copied().filter(|d| d.is_finite()).collect();
    let (lo, hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| {
        (lo.min(d), hi.max(d))
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut img = GrayImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let d = dist[[y, x]];
            let v = if d.is_finite() {
                ((d - lo) / span * 254.0).round() as u8
            } else {
                255
            };
            img.put_pixel(x as u32, y as u32, Luma([v]));
        }
    }
    img.save(path)?;
    let (lo, hi) = if finite.is_empty() { (0.0, 0.0) } else { (lo, hi) };
    std::fs::write(range_sidecar(path), format!("{lo} {hi}\n"))?;
    Ok(())
}

/// Writes rows of floats as a CSV file with the given header line.
pub fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};

    #[test]
    fn rgb_png_round_trip_stays_within_quantization_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut px = Array3::zeros((9, 13, 3));
        for v in px.iter_mut() {
            *v = rng.random::<f64>();
        }
        write_rgb_png(&path, &px).unwrap();
        let back = read_rgb_png(&path).unwrap();
        assert_eq!(back.dim(), (9, 13, 3));
        for (a, b) in px.iter().zip(back.iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn out_of_range_values_are_clamped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clamp.png");
        let mut px = Array3::zeros((1, 2, 3));
        px[[0, 0, 0]] = -3.0;
        px[[0, 1, 0]] = 7.5;
        write_rgb_png(&path, &px).unwrap();
        let back = read_rgb_png(&path).unwrap();
        assert_eq!(back[[0, 0, 0]], 0.0);
        assert_eq!(back[[0, 1, 0]], 1.0);
    }

    #[test]
    fn wrong_channel_count_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let px = Array3::zeros((2, 2, 4));
        assert!(write_rgb_png(&dir.path().join("x.png"), &px).is_err());
    }

    #[test]
    fn depth_png_writes_range_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("depth.png");
        let mut dist = Array2::from_elem((4, 4), f64::INFINITY);
        dist[[1, 1]] = 1.25;
        dist[[2, 2]] = 2.75;
        write_depth_png(&path, &dist).unwrap();
        let sidecar = std::fs::read_to_string(dir.path().join("depth.png.range.txt")).unwrap();
        assert_eq!(sidecar.trim(), "1.25 2.75");
        let img = image::open(&path).unwrap().to_luma8();
        assert_eq!(img.get_pixel(0, 0).0[0], 255); // miss renders white
        assert_eq!(img.get_pixel(1, 1).0[0], 0); // nearest is darkest
        assert_eq!(img.get_pixel(2, 2).0[0], 254);
    }

    #[test]
    fn csv_rows_are_comma_joined() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_csv(&path, "step,loss", &[vec![0.0, 1.5], vec![1.0, 0.25]]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "step,loss\n0,1.5\n1,0.25\n");
    }
}
