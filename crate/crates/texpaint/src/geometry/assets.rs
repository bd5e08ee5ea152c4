//! Deterministic generators for the small test meshes used across the crate.

use std::collections::BTreeMap;

use nalgebra::{Point2, Point3};

use crate::geometry::{Facet, Mesh};

/// A unit quad in the z = 0 plane facing +z, UV-mapped onto all of [0,1]^2.
pub fn unit_quad() -> Mesh {
    let vertices = vec![
        Point3::new(-0.5, -0.5, 0.0),
        Point3::new(0.5, -0.5, 0.0),
        Point3::new(0.5, 0.5, 0.0),
        Point3::new(-0.5, 0.5, 0.0),
    ];
    let uvs = vec![
        Point2::new(0.0, 0.0),
        Point2::new(1.0, 0.0),
        Point2::new(1.0, 1.0),
        Point2::new(0.0, 1.0),
    ];
    let facets = vec![
        Facet { v: [0, 1, 2], vt: [0, 1, 2] },
        Facet { v: [0, 2, 3], vt: [0, 2, 3] },
    ];
    Mesh::new(vertices, uvs, facets).expect("quad is valid")
}

/// A unit cube centered at the origin with a box unwrap.
///
/// The six faces occupy a 4 x 2 grid of UV cells (two cells unused), so at
/// texture resolutions divisible by 4 every face covers an exact texel block.
pub fn cube() -> Mesh {
    let h = 0.5;
    let corners = [
        Point3::new(-h, -h, -h), // 0
        Point3::new(h, -h, -h),  // 1
        Point3::new(h, h, -h),   // 2
        Point3::new(-h, h, -h),  // 3
        Point3::new(-h, -h, h),  // 4
        Point3::new(h, -h, h),   // 5
        Point3::new(h, h, h),    // 6
        Point3::new(-h, h, h),   // 7
    ];
    // Outward counter-clockwise quads: +z, -z, +x, -x, +y, -y.
    let faces: [[usize; 4]; 6] = [
        [4, 5, 6, 7],
        [0, 3, 2, 1],
        [1, 2, 6, 5],
        [0, 4, 7, 3],
        [3, 7, 6, 2],
        [0, 1, 5, 4],
    ];
    let mut vertices = Vec::new();
    let mut uvs = Vec::new();
    let mut facets = Vec::new();
    for (k, quad) in faces.iter().enumerate() {
        let col = (k % 4) as f64;
        let row = (k / 4) as f64;
        let (u0, v0) = (col * 0.25, row * 0.5);
        let cell = [
            Point2::new(u0, v0),
            Point2::new(u0 + 0.25, v0),
            Point2::new(u0 + 0.25, v0 + 0.5),
            Point2::new(u0, v0 + 0.5),
        ];
        let base = vertices.len();
        for (c, &vi) in quad.iter().enumerate() {
            vertices.push(corners[vi]);
            uvs.push(cell[c]);
        }
        facets.push(Facet {
            v: [base, base + 1, base + 2],
            vt: [base, base + 1, base + 2],
        });
        facets.push(Facet {
            v: [base, base + 2, base + 3],
            vt: [base, base + 2, base + 3],
        });
    }
    Mesh::new(vertices, uvs, facets).expect("cube is valid")
}

/// An icosphere of radius 0.5 with each facet unwrapped into its own UV cell.
///
/// `subdivisions` levels of 4-way triangle subdivision are applied to an
/// icosahedron before projecting vertices onto the sphere; facet count is
/// `20 * 4^subdivisions`.
pub fn icosphere(subdivisions: usize) -> Mesh {
    let phi = (1.0 + 5.0f64.sqrt()) / 2.0;
    let mut verts = vec![
        Point3::new(-1.0, phi, 0.0),
        Point3::new(1.0, phi, 0.0),
        Point3::new(-1.0, -phi, 0.0),
        Point3::new(1.0, -phi, 0.0),
        Point3::new(0.0, -1.0, phi),
        Point3::new(0.0, 1.0, phi),
        Point3::new(0.0, -1.0, -phi),
        Point3::new(0.0, 1.0, -phi),
        Point3::new(phi, 0.0, -1.0),
        Point3::new(phi, 0.0, 1.0),
        Point3::new(-phi, 0.0, -1.0),
        Point3::new(-phi, 0.0, 1.0),
    ];
    let mut tris: Vec<[usize; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(tris.len() * 4);
        for t in &tris {
            let mid = |a: usize, b: usize,
                       verts: &mut Vec<Point3<f64>>,
                       midpoints: &mut BTreeMap<(usize, usize), usize>| {
                let key = (a.min(b), a.max(b));
                *midpoints.entry(key).or_insert_with(|| {
                    let m = Point3::from((verts[a].coords + verts[b].coords) / 2.0);
                    verts.push(m);
                    verts.len() - 1
                })
            };
            let ab = mid(t[0], t[1], &mut verts, &mut midpoints);
            let bc = mid(t[1], t[2], &mut verts, &mut midpoints);
            let ca = mid(t[2], t[0], &mut verts, &mut midpoints);
            next.push([t[0], ab, ca]);
            next.push([t[1], bc, ab]);
            next.push([t[2], ca, bc]);
            next.push([ab, bc, ca]);
        }
        tris = next;
    }
    for v in &mut verts {
        let n = v.coords.norm();
        v.coords *= 0.5 / n;
    }
    // Per-facet UV unwrap: each triangle gets an inset right triangle inside
    // its own grid cell, so the atlas is injective by construction.
    let grid = (tris.len() as f64).sqrt().ceil() as usize;
    let cell = 1.0 / grid as f64;
    let margin = cell * 0.1;
    let mut uvs = Vec::with_capacity(tris.len() * 3);
    let mut facets = Vec::with_capacity(tris.len());
    for (k, t) in tris.iter().enumerate() {
        let u0 = (k % grid) as f64 * cell;
        let v0 = (k / grid) as f64 * cell;
        let base = uvs.len();
        uvs.push(Point2::new(u0 + margin, v0 + margin));
        uvs.push(Point2::new(u0 + cell - margin, v0 + margin));
        uvs.push(Point2::new(u0 + margin, v0 + cell - margin));
        facets.push(Facet {
            v: *t,
            vt: [base, base + 1, base + 2],
        });
    }
    Mesh::new(verts, uvs, facets).expect("icosphere is valid")
}
