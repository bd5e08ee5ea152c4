//! Minimal OBJ reader/writer for UV-mapped triangle and quad meshes.
//!
//! Supported directives: `v`, `vt`, `f` (triangles or quads, `v/vt` or
//! `v/vt/vn` references). Quads are fan-triangulated. `vn` data and grouping
//! directives are ignored. Every facet vertex must carry a UV index.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point2, Point3};

use crate::error::{Error, Result};
use crate::geometry::{Facet, Mesh};

/// Parses an OBJ file into a [`Mesh`]. Errors carry 1-based line numbers.
pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path)?;
    parse_obj(&text)
}

/// Parses OBJ text; see [`load_mesh`].
pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut uvs: Vec<Point2<f64>> = Vec::new();
    let mut facets: Vec<Facet> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let mut it = l.split_whitespace();
        let tag = it.next().unwrap();
        match tag {
            "v" => {
                let p = parse_floats::<3>(&mut it, line, "v")?;
                vertices.push(Point3::new(p[0], p[1], p[2]));
            }
            "vt" => {
                let mut vals = Vec::new();
                for tok in it {
                    vals.push(parse_float(tok, line)?);
                }
                if vals.len() < 2 {
                    return Err(Error::ObjParse {
                        line,
                        msg: "vt needs at least 2 components".into(),
                    });
                }
                uvs.push(Point2::new(vals[0], vals[1]));
            }
            "f" => {
                let mut corners: Vec<(usize, usize)> = Vec::new();
                for tok in it {
                    corners.push(parse_face_corner(tok, line, vertices.len(), uvs.len())?);
                }
                match corners.len() {
                    3 => facets.push(corner_facet(&corners, [0, 1, 2])),
                    4 => {
                        facets.push(corner_facet(&corners, [0, 1, 2]));
                        facets.push(corner_facet(&corners, [0, 2, 3]));
                    }
                    n => {
                        return Err(Error::ObjParse {
                            line,
                            msg: format!("facet has {n} corners; only triangles and quads are supported"),
                        })
                    }
                }
            }
            // vn, o, g, s, usemtl, mtllib and other directives are ignored.
            _ => {}
        }
    }
    Mesh::new(vertices, uvs, facets)
}

fn corner_facet(corners: &[(usize, usize)], order: [usize; 3]) -> Facet {
    Facet {
        v: [corners[order[0]].0, corners[order[1]].0, corners[order[2]].0],
        vt: [corners[order[0]].1, corners[order[1]].1, corners[order[2]].1],
    }
}

fn parse_float(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::ObjParse {
        line,
        msg: format!("malformed numeric field '{tok}'"),
    })
}

fn parse_floats<'a, const N: usize>(
    it: &mut impl Iterator<Item = &'a str>,
    line: usize,
    tag: &str,
) -> Result<[f64; N]> {
    let mut out = [0.0; N];
    for slot in out.iter_mut() {
        let tok = it.next().ok_or_else(|| Error::ObjParse {
            line,
            msg: format!("{tag} needs {N} components"),
        })?;
        *slot = parse_float(tok, line)?;
    }
    Ok(out)
}

/// Parses `v/vt` or `v/vt/vn` into 0-based `(vertex, uv)` indices.
fn parse_face_corner(tok: &str, line: usize, n_v: usize, n_vt: usize) -> Result<(usize, usize)> {
    let parts: Vec<&str> = tok.split('/').collect();
    if parts.len() < 2 || parts[1].is_empty() {
        return Err(Error::ObjParse {
            line,
            msg: format!("facet corner '{tok}' has no uv index; textures require v/vt references"),
        });
    }
    let v = parse_obj_index(parts[0], line, n_v)?;
    let vt = parse_obj_index(parts[1], line, n_vt)?;
    Ok((v, vt))
}

fn parse_obj_index(tok: &str, line: usize, count: usize) -> Result<usize> {
    let idx: i64 = tok.parse().map_err(|_| Error::ObjParse {
        line,
        msg: format!("malformed index '{tok}'"),
    })?;
    if idx < 1 {
        return Err(Error::ObjParse {
            line,
            msg: format!("index {idx} is not positive; relative indices are unsupported"),
        });
    }
    let zero = (idx - 1) as usize;
    if zero >= count {
        return Err(Error::ObjParse {
            line,
            msg: format!("index {idx} out of range (have {count})"),
        });
    }
    Ok(zero)
}

/// Serializes a mesh as OBJ text with deterministic ordering.
pub fn mesh_to_obj(mesh: &Mesh) -> String {
    let mut out = String::new();
    for p in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", p.x, p.y, p.z);
    }
    for t in mesh.uvs() {
        let _ = writeln!(out, "vt {} {}", t.x, t.y);
    }
    for f in mesh.facets() {
        let _ = writeln!(
            out,
            "f {}/{} {}/{} {}/{}",
            f.v[0] + 1,
            f.vt[0] + 1,
            f.v[1] + 1,
            f.vt[1] + 1,
            f.v[2] + 1,
            f.vt[2] + 1
        );
    }
    out
}

/// Writes a mesh to an OBJ file.
pub fn write_obj(mesh: &Mesh, path: &Path) -> Result<()> {
    std::fs::write(path, mesh_to_obj(mesh))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD_OBJ: &str = "\
# a unit quad
v -0.5 -0.5 0
v 0.5 -0.5 0
v 0.5 0.5 0
v -0.5 0.5 0
vt 0 0
vt 1 0
vt 1 1
vt 0 1
f 1/1 2/2 3/3 4/4
";

    #[test]
    fn parses_quad_with_fan_triangulation() {
        let m = parse_obj(QUAD_OBJ).unwrap();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.uvs().len(), 4);
        assert_eq!(m.facets().len(), 2);
        assert_eq!(m.facets()[0].v, [0, 1, 2]);
        assert_eq!(m.facets()[1].v, [0, 2, 3]);
    }

    #[test]
    fn parses_triangles_with_vn_references() {
        let text = "\
v 0 0 0
v 1 0 0
v 0 1 0
vt 0 0
vt 1 0
vt 0 1
vn 0 0 1
f 1/1/1 2/2/1 3/3/1
";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.facets().len(), 1);
    }

    #[test]
    fn rejects_missing_uv_with_line_number() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        match parse_obj(text) {
            Err(Error::ObjParse { line, msg }) => {
                assert_eq!(line, 4);
                assert!(msg.contains("uv"), "unexpected message: {msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_numbers_and_bad_indices() {
        assert!(matches!(
            parse_obj("v 0 zero 0\n"),
            Err(Error::ObjParse { line: 1, .. })
        ));
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 9/1\n";
        assert!(matches!(
            parse_obj(text),
            Err(Error::ObjParse { line: 5, .. })
        ));
        let neg = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 -1/1\n";
        assert!(matches!(parse_obj(neg), Err(Error::ObjParse { line: 5, .. })));
    }

    #[test]
    fn rejects_polygons_beyond_quads() {
        let text = "\
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v -1 1 0
vt 0 0
f 1/1 2/1 3/1 4/1 5/1
";
        assert!(matches!(
            parse_obj(text),
            Err(Error::ObjParse { line: 7, .. })
        ));
    }

    #[test]
    fn roundtrips_through_writer() {
        let m = parse_obj(QUAD_OBJ).unwrap();
        let text = mesh_to_obj(&m);
        let n = parse_obj(&text).unwrap();
        assert_eq!(m.vertices(), n.vertices());
        assert_eq!(m.uvs(), n.uvs());
        assert_eq!(m.facets(), n.facets());
    }
}
