//! Pinhole cameras, software rasterization, and texel visibility.
//!
//! Rasterization is facet-major with a z-buffer resolved by distance and
//! then facet index, so results are deterministic and independent of any
//! parallel scheduling. Depth is the Euclidean camera-space distance of the
//! surface point. Along with the per-pixel depth the rasterizer stores the
//! hit facet's screen-linear inverse-depth plane, which lets visibility
//! queries compare a texel against the occluder surface at the texel's exact
//! subpixel position instead of the pixel center; without that, surfaces
//! seen at an angle would spuriously occlude their own texels.

use ndarray::{Array2, Array3};
use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Mesh, TexelTable};

/// Visibility slack in normalized-mesh units.
pub const EPS_VIS: f64 = 1e-3;

/// Background fill value (mid-gray) used for pixels no facet covers.
pub const BACKGROUND: f64 = 0.5;

/// Near-plane cutoff: geometry closer than this along the view axis is culled.
const NEAR: f64 = 1e-6;

/// A pinhole camera with a square pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// Camera center in world space.
    pub position: Point3<f64>,
    /// Point the camera looks at.
    pub look_at: Point3<f64>,
    /// Up hint; must not be parallel to the view direction.
    pub up: Vector3<f64>,
    /// Vertical field of view in degrees, in (0, 180).
    pub fov_y_deg: f64,
    /// Image width in pixels.
    pub width: usize,
    /// Image height in pixels.
    pub height: usize,
}

/// Orthonormal view basis derived from a camera.
#[derive(Debug, Clone, Copy)]
struct ViewBasis {
    right: Vector3<f64>,
    up: Vector3<f64>,
    forward: Vector3<f64>,
}

impl Camera {
    fn basis(&self) -> Result<ViewBasis> {
        if !(self.fov_y_deg > 0.0 && self.fov_y_deg < 180.0) {
            return Err(Error::InvalidMesh(format!(
                "camera fov {} outside (0, 180)",
                self.fov_y_deg
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidMesh("camera image size must be nonzero".into()));
        }
        let forward = self.look_at - self.position;
        let flen = forward.norm();
        if flen <= 1e-12 {
            return Err(Error::InvalidMesh("camera position equals its target".into()));
        }
        let forward = forward / flen;
        let right = forward.cross(&self.up);
        let rlen = right.norm();
        if rlen <= 1e-9 {
            return Err(Error::InvalidMesh(
                "camera up vector is parallel to the view direction".into(),
            ));
        }
        let right = right / rlen;
        let up = right.cross(&forward);
        Ok(ViewBasis { right, up, forward })
    }

    fn tan_half(&self) -> (f64, f64) {
        let tan_v = (self.fov_y_deg.to_radians() / 2.0).tan();
        let tan_h = tan_v * self.width as f64 / self.height as f64;
        (tan_h, tan_v)
    }

    /// Length of the (unnormalized) pixel ray `(x_ndc*tan_h, y_ndc*tan_v, 1)`
    /// at continuous screen position `(sx, sy)`.
    fn ray_len(&self, sx: f64, sy: f64) -> f64 {
        let (tan_h, tan_v) = self.tan_half();
        let x = (sx * 2.0 / self.width as f64 - 1.0) * tan_h;
        let y = (1.0 - sy * 2.0 / self.height as f64) * tan_v;
        (x * x + y * y + 1.0).sqrt()
    }
}

/// Places `count` cameras on a circle of the given radius: yaw starts at 0
/// and advances by `360 / count` degrees counter-clockwise around world +z,
/// all at the same pitch above the horizontal plane, looking at the origin.
pub fn sample_cameras(
    count: usize,
    radius: f64,
    pitch_deg: f64,
    fov_y_deg: f64,
    image_size: (usize, usize),
) -> Vec<Camera> {
    let pitch = pitch_deg.to_radians();
    (0..count)
        .map(|k| {
            let yaw = (k as f64) * std::f64::consts::TAU / count as f64;
            let position = Point3::new(
                radius * pitch.cos() * yaw.cos(),
                radius * pitch.cos() * yaw.sin(),
                radius * pitch.sin(),
            );
            Camera {
                position,
                look_at: Point3::origin(),
                up: Vector3::new(0.0, 0.0, 1.0),
                fov_y_deg,
                width: image_size.0,
                height: image_size.1,
            }
        })
        .collect()
}

/// Indices of `cameras` sorted by an order intrinsic to each camera (its
/// position), so reductions over cameras are independent of list order.
pub fn canonical_camera_order(cameras: &[Camera]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cameras.len()).collect();
    order.sort_by(|&a, &b| {
        let pa = cameras[a].position;
        let pb = cameras[b].position;
        pa.x.total_cmp(&pb.x)
            .then(pa.y.total_cmp(&pb.y))
            .then(pa.z.total_cmp(&pb.z))
    });
    order
}

/// Per-pixel depth and occluder-surface data for one camera.
#[derive(Debug, Clone)]
pub struct DepthMap {
    /// Euclidean distance from the camera center; `INFINITY` for misses.
    pub dist: Array2<f64>,
    /// Hit facet index; -1 for misses.
    pub facet: Array2<i64>,
    /// Screen-linear inverse-depth plane `iz(sx, sy) = a*sx + b*sy + c` of
    /// the hit facet, used for subpixel-exact visibility comparisons.
    pub plane: Array2<[f64; 3]>,
}

impl DepthMap {
    /// Image width in pixels.
    pub fn width(&self) -> usize {
        self.dist.dim().1
    }

    /// Image height in pixels.
    pub fn height(&self) -> usize {
        self.dist.dim().0
    }
}

/// Full rasterization output: depth plus perspective-correct UVs.
#[derive(Debug, Clone)]
pub struct RasterFrame {
    /// Depth and occluder data.
    pub depth: DepthMap,
    /// Interpolated UV per pixel; NaN for misses.
    pub uv: Array2<[f64; 2]>,
}

/// A decoded or rendered RGB image paired with the camera it belongs to.
#[derive(Debug, Clone)]
pub struct ImageView {
    /// Pixel grid, `(height, width, 3)`, values nominally in [0, 1].
    pub pixels: Array3<f64>,
    /// Index into the run's camera list.
    pub camera: usize,
}

/// Rasterizes the mesh under a camera, producing depth and UV per pixel.
pub fn rasterize(mesh: &Mesh, camera: &Camera) -> Result<RasterFrame> {
    let basis = camera.basis()?;
    let (w, h) = (camera.width, camera.height);
    let (tan_h, tan_v) = camera.tan_half();

    let mut dist = Array2::from_elem((h, w), f64::INFINITY);
    let mut facet_of = Array2::from_elem((h, w), -1i64);
    let mut plane = Array2::from_elem((h, w), [0.0f64; 3]);
    let mut uv = Array2::from_elem((h, w), [f64::NAN; 2]);

    for (k, f) in mesh.facets().iter().enumerate() {
        // Project the three vertices.
        let mut sx = [0.0; 3];
        let mut sy = [0.0; 3];
        let mut iz = [0.0; 3];
        let mut behind = false;
        for c in 0..3 {
            let d = mesh.vertices()[f.v[c]] - camera.position;
            let zf = d.dot(&basis.forward);
            if zf <= NEAR {
                behind = true;
                break;
            }
            let x_ndc = d.dot(&basis.right) / (zf * tan_h);
            let y_ndc = d.dot(&basis.up) / (zf * tan_v);
            sx[c] = (x_ndc + 1.0) / 2.0 * w as f64;
            sy[c] = (1.0 - y_ndc) / 2.0 * h as f64;
            iz[c] = 1.0 / zf;
        }
        if behind {
            continue; // conservative: facets crossing the near plane are skipped
        }
        let area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sx[2] - sx[0]) * (sy[1] - sy[0]);
        if area.abs() <= f64::MIN_POSITIVE {
            continue; // edge-on sliver
        }
        // Screen plane of inverse depth (exact for a planar facet).
        let pa = ((iz[1] - iz[0]) * (sy[2] - sy[0]) - (iz[2] - iz[0]) * (sy[1] - sy[0])) / area;
        let pb = ((sx[1] - sx[0]) * (iz[2] - iz[0]) - (sx[2] - sx[0]) * (iz[1] - iz[0])) / area;
        let pc = iz[0] - pa * sx[0] - pb * sy[0];

        let uv0 = mesh.uvs()[f.vt[0]];
        let uv1 = mesh.uvs()[f.vt[1]];
        let uv2 = mesh.uvs()[f.vt[2]];

        let min_x = sx.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        let max_x = sx.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let min_y = sy.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        let max_y = sy.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
        let px0 = (min_x - 0.5).ceil().max(0.0) as usize;
        let px1 = ((max_x - 0.5).floor()).min(w as f64 - 1.0);
        let py0 = (min_y - 0.5).ceil().max(0.0) as usize;
        let py1 = ((max_y - 0.5).floor()).min(h as f64 - 1.0);
        if px1 < 0.0 || py1 < 0.0 {
            continue;
        }

        for py in py0..=(py1 as usize) {
            let cy = py as f64 + 0.5;
            for px in px0..=(px1 as usize) {
                let cx = px as f64 + 0.5;
                let l0 = ((sx[1] - cx) * (sy[2] - cy) - (sx[2] - cx) * (sy[1] - cy)) / area;
                let l1 = ((sx[2] - cx) * (sy[0] - cy) - (sx[0] - cx) * (sy[2] - cy)) / area;
                let l2 = 1.0 - l0 - l1;
                if l0 < 0.0 || l1 < 0.0 || l2 < 0.0 {
                    continue;
                }
                let iz_pix = l0 * iz[0] + l1 * iz[1] + l2 * iz[2];
                if iz_pix <= 0.0 {
                    continue;
                }
                let zf = 1.0 / iz_pix;
                let d = zf * camera.ray_len(cx, cy);
                if d < dist[[py, px]] {
                    dist[[py, px]] = d;
                    facet_of[[py, px]] = k as i64;
                    plane[[py, px]] = [pa, pb, pc];
                    let u = (l0 * uv0.x * iz[0] + l1 * uv1.x * iz[1] + l2 * uv2.x * iz[2]) * zf;
                    let v = (l0 * uv0.y * iz[0] + l1 * uv1.y * iz[1] + l2 * uv2.y * iz[2]) * zf;
                    uv[[py, px]] = [u, v];
                }
            }
        }
    }

    Ok(RasterFrame {
        depth: DepthMap {
            dist,
            facet: facet_of,
            plane,
        },
        uv,
    })
}

/// Renders only the depth map.
pub fn render_depth(mesh: &Mesh, camera: &Camera) -> Result<DepthMap> {
    Ok(rasterize(mesh, camera)?.depth)
}

/// Maps every hit pixel to the row-major index of the nearest texel under
/// its interpolated UV; -1 for misses. This fixed correspondence is what
/// texture gradients flow through during joint optimization.
pub fn texel_map(frame: &RasterFrame, table: &TexelTable) -> Array2<i64> {
    let (h, w) = frame.uv.dim();
    let (tw, th) = (table.width(), table.height());
    let mut map = Array2::from_elem((h, w), -1i64);
    for py in 0..h {
        for px in 0..w {
            if frame.depth.facet[[py, px]] < 0 {
                continue;
            }
            let [u, v] = frame.uv[[py, px]];
            let tx = ((u * tw as f64).floor().max(0.0) as usize).min(tw - 1);
            let ty = ((v * th as f64).floor().max(0.0) as usize).min(th - 1);
            map[[py, px]] = (ty * tw + tx) as i64;
        }
    }
    map
}

/// Gathers texel values through a precomputed pixel-to-texel map.
///
/// `grid` is any `(th, tw, c)` texel grid; misses take `background`
/// (cycled over channels).
pub fn render_grid_with_map(
    map: &Array2<i64>,
    grid: &Array3<f64>,
    background: &[f64],
) -> Array3<f64> {
    let (h, w) = map.dim();
    let (th, tw, c) = grid.dim();
    let _ = th;
    let mut out = Array3::zeros((h, w, c));
    for py in 0..h {
        for px in 0..w {
            let t = map[[py, px]];
            if t < 0 {
                for ch in 0..c {
                    out[[py, px, ch]] = background[ch % background.len()];
                }
            } else {
                let ty = t as usize / tw;
                let tx = t as usize % tw;
                for ch in 0..c {
                    out[[py, px, ch]] = grid[[ty, tx, ch]];
                }
            }
        }
    }
    out
}

/// Rasterizes and renders a texel grid in one call.
pub fn render_grid(
    mesh: &Mesh,
    grid: &Array3<f64>,
    table: &TexelTable,
    camera: &Camera,
    background: &[f64],
) -> Result<Array3<f64>> {
    let frame = rasterize(mesh, camera)?;
    let map = texel_map(&frame, table);
    Ok(render_grid_with_map(&map, grid, background))
}

/// Renders an RGB texture under a camera with nearest-texel fetches; no
/// lighting or shading is applied.
pub fn render_color(
    mesh: &Mesh,
    texture: &Array3<f64>,
    table: &TexelTable,
    camera: &Camera,
    camera_index: usize,
    background: [f64; 3],
) -> Result<ImageView> {
    let pixels = render_grid(mesh, texture, table, camera, &background)?;
    Ok(ImageView {
        pixels,
        camera: camera_index,
    })
}

/// Projects a texel center into a camera and tests visibility.
///
/// Returns the nearest pixel `(px, py)` when the texel projects inside the
/// image onto a hit pixel and is not occluded: its distance must not exceed
/// the occluder surface's distance (evaluated at the texel's exact subpixel
/// position via the stored inverse-depth plane) by more than [`EPS_VIS`].
pub fn project_texel(
    table: &TexelTable,
    camera: &Camera,
    depth: &DepthMap,
    texel: (usize, usize),
) -> Option<(usize, usize)> {
    let entry = table.entry(texel.0, texel.1)?;
    let basis = camera.basis().ok()?;
    let (tan_h, tan_v) = camera.tan_half();
    let d = entry.world - camera.position;
    let zf = d.dot(&basis.forward);
    if zf <= NEAR {
        return None;
    }
    let x_ndc = d.dot(&basis.right) / (zf * tan_h);
    let y_ndc = d.dot(&basis.up) / (zf * tan_v);
    let sx = (x_ndc + 1.0) / 2.0 * camera.width as f64;
    let sy = (1.0 - y_ndc) / 2.0 * camera.height as f64;
    if !(sx >= 0.0 && sx < camera.width as f64 && sy >= 0.0 && sy < camera.height as f64) {
        return None;
    }
    let (px, py) = (sx as usize, sy as usize);
    if depth.facet[[py, px]] < 0 {
        return None;
    }
    let dist = d.norm();
    let [a, b, c] = depth.plane[[py, px]];
    let iz_here = a * sx + b * sy + c;
    let occluder = if iz_here > 0.0 {
        camera.ray_len(sx, sy) / iz_here
    } else {
        depth.dist[[py, px]]
    };
    if dist <= occluder + EPS_VIS {
        Some((px, py))
    } else {
        None
    }
}
