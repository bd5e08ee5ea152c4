//! Triangle meshes with UV atlases, normalization, and texel tables.
//!
//! A texel table inverts the UV map at texture resolution: each texel whose
//! center lies inside the UV footprint of a facet stores that surface point's
//! world position, facet normal, and barycentric coordinates. The table is
//! the bridge between texture space and world space used by rendering,
//! visibility weighting, and fusion.

mod assets;
mod obj;

pub use assets::{cube, icosphere, unit_quad};
pub use obj::{load_mesh, write_obj};

use nalgebra::{Point2, Point3, Vector3};

use crate::error::{Error, Result};

/// One triangle: indices into the vertex and UV tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Facet {
    /// Vertex indices, counter-clockwise when seen from the front side.
    pub v: [usize; 3],
    /// UV indices, aligned with `v`.
    pub vt: [usize; 3],
}

/// An indexed triangle mesh with a UV atlas and per-facet unit normals.
#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point3<f64>>,
    uvs: Vec<Point2<f64>>,
    facets: Vec<Facet>,
    normals: Vec<Vector3<f64>>,
}

impl Mesh {
    /// Validates indices, rejects degenerate facets, and computes per-facet
    /// unit normals from the counter-clockwise winding.
    pub fn new(vertices: Vec<Point3<f64>>, uvs: Vec<Point2<f64>>, facets: Vec<Facet>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidMesh("mesh has no vertices".into()));
        }
        let mut normals = Vec::with_capacity(facets.len());
        for (k, f) in facets.iter().enumerate() {
            for &i in &f.v {
                if i >= vertices.len() {
                    return Err(Error::InvalidMesh(format!(
                        "facet {k} references vertex {i} of {}",
                        vertices.len()
                    )));
                }
            }
            for &i in &f.vt {
                if i >= uvs.len() {
                    return Err(Error::InvalidMesh(format!(
                        "facet {k} references uv {i} of {}",
                        uvs.len()
                    )));
                }
            }
            if f.v[0] == f.v[1] || f.v[1] == f.v[2] || f.v[0] == f.v[2] {
                return Err(Error::InvalidMesh(format!(
                    "facet {k} repeats a vertex index"
                )));
            }
            let a = vertices[f.v[0]];
            let b = vertices[f.v[1]];
            let c = vertices[f.v[2]];
            let n = (b - a).cross(&(c - a));
            let len = n.norm();
            if len <= 1e-12 {
                return Err(Error::InvalidMesh(format!(
                    "facet {k} is degenerate (zero area)"
                )));
            }
            normals.push(n / len);
        }
        Ok(Self {
            vertices,
            uvs,
            facets,
            normals,
        })
    }

    /// Vertex positions.
    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    /// UV coordinates; usually inside `[0, 1]^2`.
    pub fn uvs(&self) -> &[Point2<f64>] {
        &self.uvs
    }

    /// Triangles.
    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// Per-facet unit normals.
    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Point3<f64>, Point3<f64>) {
        let mut min = self.vertices[0];
        let mut max = self.vertices[0];
        for p in &self.vertices {
            for i in 0..3 {
                min[i] = min[i].min(p[i]);
                max[i] = max[i].max(p[i]);
            }
        }
        (min, max)
    }

    /// Total area of the UV triangles, in UV-square units.
    pub fn uv_area(&self) -> f64 {
        self.facets
            .iter()
            .map(|f| {
                let a = self.uvs[f.vt[0]];
                let b = self.uvs[f.vt[1]];
                let c = self.uvs[f.vt[2]];
                0.5 * ((b - a).x * (c - a).y - (b - a).y * (c - a).x).abs()
            })
            .sum()
    }
}

/// Translates the mesh to the origin and uniformly scales it so the longest
/// bounding-box edge is 1. Normals are unchanged; a second application is a
/// no-op up to floating-point rounding (exactly a no-op when the box is
/// already exactly centered and unit-length).
pub fn normalize_mesh(mesh: &Mesh) -> Result<Mesh> {
    let (min, max) = mesh.bounding_box();
    let extent = (0..3).map(|i| max[i] - min[i]).fold(0.0f64, f64::max);
    if extent <= 0.0 {
        return Err(Error::InvalidMesh(
            "cannot normalize: bounding box has zero extent".into(),
        ));
    }
    let center = Point3::new(
        (min.x + max.x) / 2.0,
        (min.y + max.y) / 2.0,
        (min.z + max.z) / 2.0,
    );
    if center == Point3::origin() && extent == 1.0 {
        return Ok(mesh.clone());
    }
    let scale = 1.0 / extent;
    let vertices = mesh
        .vertices
        .iter()
        .map(|p| Point3::new((p.x - center.x) * scale, (p.y - center.y) * scale, (p.z - center.z) * scale))
        .collect();
    Mesh::new(vertices, mesh.uvs.clone(), mesh.facets.clone())
}

/// Data stored for a texel whose center lies on the surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexelEntry {
    /// World position of the texel center under the inverse UV map.
    pub world: Point3<f64>,
    /// Unit normal of the owning facet.
    pub normal: Vector3<f64>,
    /// Owning facet index (the lowest facet containing the center on ties).
    pub facet: usize,
    /// Barycentric coordinates of the texel center in the owning UV triangle.
    pub bary: [f64; 3],
}

/// Inverse UV map sampled at texel centers.
///
/// Texel `(col i, row j)` corresponds to UV `((i + 0.5) / w, (j + 0.5) / h)`;
/// row-major storage. Texels outside every UV triangle are invalid.
#[derive(Debug, Clone)]
pub struct TexelTable {
    width: usize,
    height: usize,
    entries: Vec<Option<TexelEntry>>,
}

impl TexelTable {
    /// Texture width in texels.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Texture height in texels.
    pub fn height(&self) -> usize {
        self.height
    }

    /// Entry for texel `(col, row)`, if its center lies on the surface.
    pub fn entry(&self, col: usize, row: usize) -> Option<&TexelEntry> {
        self.entries[row * self.width + col].as_ref()
    }

    /// Entry by row-major texel index.
    pub fn entry_by_index(&self, idx: usize) -> Option<&TexelEntry> {
        self.entries[idx].as_ref()
    }

    /// Number of texels (valid or not).
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// True when the table has no texels.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of texels whose center lies on the surface.
    pub fn valid_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    /// Iterates `(col, row, entry)` over valid texels in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (usize, usize, &TexelEntry)> {
        self.entries.iter().enumerate().filter_map(move |(i, e)| {
            e.as_ref()
                .map(|entry| (i % self.width, i / self.width, entry))
        })
    }
}

/// Builds the texel table for a mesh at the given texture resolution.
///
/// A texel is valid iff its center is inside (or exactly on the boundary of)
/// at least one facet's UV triangle; when several facets contain the center,
/// the lowest facet index wins, which makes shared-edge ownership
/// deterministic.
pub fn build_texel_table(mesh: &Mesh, resolution: (usize, usize)) -> Result<TexelTable> {
    let (width, height) = resolution;
    if width == 0 || height == 0 {
        return Err(Error::InvalidMesh("texture resolution must be nonzero".into()));
    }
    let mut entries: Vec<Option<TexelEntry>> = vec![None; width * height];
    for (k, f) in mesh.facets.iter().enumerate() {
        let a = mesh.uvs[f.vt[0]];
        let b = mesh.uvs[f.vt[1]];
        let c = mesh.uvs[f.vt[2]];
        let det = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if det.abs() <= f64::MIN_POSITIVE {
            // Zero UV area: the facet claims no texels.
            continue;
        }
        // Texel centers u_i = (i + 0.5) / w lie in [min_u, max_u] for
        // i in [min_u * w - 0.5, max_u * w - 0.5].
        let (min_u, max_u) = min_max(a.x, b.x, c.x);
        let (min_v, max_v) = min_max(a.y, b.y, c.y);
        let i0 = ((min_u * width as f64 - 0.5).ceil().max(0.0)) as usize;
        let i1 = ((max_u * width as f64 - 0.5).floor()).min(width as f64 - 1.0);
        let j0 = ((min_v * height as f64 - 0.5).ceil().max(0.0)) as usize;
        let j1 = ((max_v * height as f64 - 0.5).floor()).min(height as f64 - 1.0);
        if i1 < 0.0 || j1 < 0.0 {
            continue;
        }
        for j in j0..=(j1 as usize) {
            for i in i0..=(i1 as usize) {
                let slot = &mut entries[j * width + i];
                if slot.is_some() {
                    continue; // an earlier (lower-index) facet owns this texel
                }
                let u = (i as f64 + 0.5) / width as f64;
                let v = (j as f64 + 0.5) / height as f64;
                let l1 = ((u - a.x) * (c.y - a.y) - (v - a.y) * (c.x - a.x)) / det;
                let l2 = ((b.x - a.x) * (v - a.y) - (b.y - a.y) * (u - a.x)) / det;
                let l0 = 1.0 - l1 - l2;
                if l0 >= 0.0 && l1 >= 0.0 && l2 >= 0.0 {
                    let pa = mesh.vertices[f.v[0]];
                    let pb = mesh.vertices[f.v[1]];
                    let pc = mesh.vertices[f.v[2]];
                    let world = Point3::new(
                        l0 * pa.x + l1 * pb.x + l2 * pc.x,
                        l0 * pa.y + l1 * pb.y + l2 * pc.y,
                        l0 * pa.z + l1 * pb.z + l2 * pc.z,
                    );
                    *slot = Some(TexelEntry {
                        world,
                        normal: mesh.normals[k],
                        facet: k,
                        bary: [l0, l1, l2],
                    });
                }
            }
        }
    }
    Ok(TexelTable {
        width,
        height,
        entries,
    })
}

fn min_max(a: f64, b: f64, c: f64) -> (f64, f64) {
    (a.min(b).min(c), a.max(b).max(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quad_mesh() -> Mesh {
        unit_quad()
    }

    #[test]
    fn quad_asset_shape() {
        let m = quad_mesh();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.facets().len(), 2);
        for n in m.normals() {
            assert!((n.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_indices_and_degenerate_facets() {
        let verts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let uvs = vec![Point2::new(0.0, 0.0); 3];
        let out_of_range = Mesh::new(
            verts.clone(),
            uvs.clone(),
            vec![Facet { v: [0, 1, 7], vt: [0, 1, 2] }],
        );
        assert!(out_of_range.is_err());
        let repeated = Mesh::new(
            verts.clone(),
            uvs.clone(),
            vec![Facet { v: [0, 1, 1], vt: [0, 1, 2] }],
        );
        assert!(repeated.is_err());
        let collinear = Mesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(2.0, 0.0, 0.0),
            ],
            uvs,
            vec![Facet { v: [0, 1, 2], vt: [0, 1, 2] }],
        );
        assert!(collinear.is_err());
    }

    #[test]
    fn normalize_centers_and_scales() {
        let verts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
            Point3::new(2.0, 2.0, 2.0),
        ];
        let uvs = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(0.0, 1.0),
            Point2::new(1.0, 1.0),
        ];
        let facets = vec![
            Facet { v: [0, 1, 2], vt: [0, 1, 2] },
            Facet { v: [1, 3, 2], vt: [1, 3, 2] },
        ];
        let m = Mesh::new(verts, uvs, facets).unwrap();
        let n = normalize_mesh(&m).unwrap();
        let (min, max) = n.bounding_box();
        assert_eq!(min, Point3::new(-0.5, -0.5, -0.5));
        assert_eq!(max, Point3::new(0.5, 0.5, 0.5));
    }

    #[test]
    fn normalize_already_normalized_is_identity() {
        let m = quad_mesh();
        let n = normalize_mesh(&m).unwrap();
        assert_eq!(m.vertices(), n.vertices());
    }

    #[test]
    fn normalize_preserves_aspect_ratio() {
        let verts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(4.0, 0.0, 0.0),
            Point3::new(0.0, 2.0, 0.0),
            Point3::new(4.0, 2.0, 1.0),
        ];
        let uvs = vec![Point2::new(0.0, 0.0); 4];
        let facets = vec![
            Facet { v: [0, 1, 2], vt: [0, 1, 2] },
            Facet { v: [1, 3, 2], vt: [1, 3, 2] },
        ];
        let m = Mesh::new(verts, uvs, facets).unwrap();
        let n = normalize_mesh(&m).unwrap();
        let (min, max) = n.bounding_box();
        assert!((max.x - min.x - 1.0).abs() < 1e-12);
        assert!((max.y - min.y - 0.5).abs() < 1e-12);
        assert!((max.z - min.z - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_facet_covering_uv_square_claims_every_texel() {
        // One triangle whose UV footprint contains all of [0,1]^2.
        let verts = vec![
            Point3::new(-0.5, -0.5, 0.0),
            Point3::new(1.5, -0.5, 0.0),
            Point3::new(-0.5, 1.5, 0.0),
        ];
        let uvs = vec![
            Point2::new(0.0, 0.0),
            Point2::new(2.0, 0.0),
            Point2::new(0.0, 2.0),
        ];
        let m = Mesh::new(verts, uvs, vec![Facet { v: [0, 1, 2], vt: [0, 1, 2] }]).unwrap();
        let table = build_texel_table(&m, (4, 4)).unwrap();
        assert_eq!(table.valid_count(), 16);
        for (_, _, e) in table.iter_valid() {
            assert_eq!(e.facet, 0);
            assert!((e.normal - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn half_uv_coverage_yields_half_the_texels() {
        // Quad geometry mapped onto the left half of UV space.
        let verts = vec![
            Point3::new(-0.5, -0.5, 0.0),
            Point3::new(0.5, -0.5, 0.0),
            Point3::new(0.5, 0.5, 0.0),
            Point3::new(-0.5, 0.5, 0.0),
        ];
        let uvs = vec![
            Point2::new(0.0, 0.0),
            Point2::new(0.5, 0.0),
            Point2::new(0.5, 1.0),
            Point2::new(0.0, 1.0),
        ];
        let facets = vec![
            Facet { v: [0, 1, 2], vt: [0, 1, 2] },
            Facet { v: [0, 2, 3], vt: [0, 2, 3] },
        ];
        let m = Mesh::new(verts, uvs, facets).unwrap();
        let table = build_texel_table(&m, (4, 4)).unwrap();
        assert_eq!(table.valid_count(), 8);
    }

    #[test]
    fn shared_diagonal_texels_go_to_the_lower_facet() {
        // The quad's UV diagonal passes exactly through texel centers when
        // width == height; those texels must all resolve to facet 0.
        let m = quad_mesh();
        let table = build_texel_table(&m, (8, 8)).unwrap();
        assert_eq!(table.valid_count(), 64);
        let mut on_diagonal = 0;
        for d in 0..8 {
            let e = table.entry(d, d).unwrap();
            // unit_quad maps the diagonal u == v onto facet boundary.
            if e.bary.iter().any(|l| l.abs() < 1e-12) {
                on_diagonal += 1;
                assert_eq!(e.facet, 0, "diagonal texel ({d},{d}) owned by facet 1");
            }
        }
        assert!(on_diagonal > 0, "expected texel centers on the shared edge");
    }

    #[test]
    fn cube_texel_fraction_matches_uv_area() {
        let m = cube();
        let table = build_texel_table(&m, (64, 64)).unwrap();
        let frac = table.valid_count() as f64 / (64.0 * 64.0);
        let area = m.uv_area();
        assert!(
            (frac - area).abs() <= 1.0 / (64.0 * 64.0),
            "texel fraction {frac} vs uv area {area}"
        );
    }

    #[test]
    fn texel_table_build_is_deterministic() {
        let m = cube();
        let a = build_texel_table(&m, (32, 32)).unwrap();
        let b = build_texel_table(&m, (32, 32)).unwrap();
        for idx in 0..a.len() {
            match (a.entry_by_index(idx), b.entry_by_index(idx)) {
                (None, None) => {}
                (Some(x), Some(y)) => assert_eq!(x, y),
                _ => panic!("validity mismatch at texel {idx}"),
            }
        }
    }

    #[test]
    fn texel_world_points_lie_on_their_facet_plane() {
        let m = cube();
        let table = build_texel_table(&m, (32, 32)).unwrap();
        for (_, _, e) in table.iter_valid() {
            let f = &m.facets()[e.facet];
            let a = m.vertices()[f.v[0]];
            let d = (e.world - a).dot(&e.normal);
            assert!(d.abs() < 1e-9, "texel off plane by {d}");
            let sum: f64 = e.bary.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(e.bary.iter().all(|l| *l >= -1e-12));
        }
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(
            seed_pts in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0), 3..12)
        ) {
            // Build a fan of triangles over arbitrary points; skip inputs
            // that fail construction (degenerate geometry).
            let verts: Vec<Point3<f64>> =
                seed_pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let uvs = vec![Point2::new(0.25, 0.25); verts.len()];
            let facets: Vec<Facet> = (2..verts.len())
                .map(|i| Facet { v: [0, i - 1, i], vt: [0, i - 1, i] })
                .collect();
            let Ok(mesh) = Mesh::new(verts, uvs, facets) else {
                return Ok(());
            };
            let Ok(once) = normalize_mesh(&mesh) else {
                return Ok(());
            };
            let twice = normalize_mesh(&once).unwrap();
            for (a, b) in once.vertices().iter().zip(twice.vertices()) {
                prop_assert!((a - b).norm() <= 1e-12);
            }
            let (min, max) = once.bounding_box();
            let extent = (0..3).map(|i| max[i] - min[i]).fold(0.0f64, f64::max);
            prop_assert!((extent - 1.0).abs() <= 1e-12);
            for i in 0..3 {
                prop_assert!((min[i] + max[i]).abs() <= 1e-12);
            }
        }
    }
}
