//! Wavefront OBJ subset: `v` and `f` records. Polygons are fan-triangulated;
//! negative indices count back from the latest vertex.

use std::fmt::Write as _;
use std::path::Path;

use super::parse_error;
use crate::error::Result;
use crate::geom::Point3;
use crate::mesh::TriMesh;

pub fn parse_obj(text: &str, path: &Path) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_error(path, ln, format!("bad vertex coordinate: {e}")))?;
                if c.len() != 3 || c.iter().any(|v| !v.is_finite()) {
                    return Err(parse_error(path, ln, "vertex needs 3 finite coordinates"));
                }
                vertices.push(Point3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for t in tok {
                    let first = t.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| parse_error(path, ln, format!("bad face index {t:?}")))?;
                    let resolved = match i {
                        0 => None,
                        i if i > 0 => Some(i as usize - 1),
                        i => vertices.len().checked_sub(i.unsigned_abs() as usize),
                    };
                    match resolved {
                        Some(r) if r < vertices.len() => idx.push(r),
                        _ => return Err(parse_error(path, ln, format!("face index {i} out of range"))),
                    }
                }
                if idx.len() < 3 {
                    return Err(parse_error(path, ln, "face needs at least 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(TriMesh::new(vertices, faces, Vec::new()))
}

pub fn read_obj(path: &Path) -> Result<TriMesh> {
    parse_obj(&std::fs::read_to_string(path)?, path)
}

pub fn format_obj(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in &mesh.vertices {
        writeln!(s, "v {} {} {}", v.x, v.y, v.z).expect("write to string");
    }
    for f in &mesh.faces {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).expect("write to string");
    }
    s
}

pub fn write_obj(path: &Path, mesh: &TriMesh) -> Result<()> {
    std::fs::write(path, format_obj(mesh))?;
    Ok(())
}
