//! ASCII PLY point clouds with optional `edge_dist` and `is_edge` vertex
//! properties. Unknown properties and elements after `vertex` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::parse_error;
use crate::error::Result;
use crate::geom::Point3;
use crate::mesh::PointCloud;

pub fn parse_ply(text: &str, path: &Path) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    let mut next = || lines.next().map(|(i, l)| (i + 1, l.trim()));
    match next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_error(path, 1, "missing 'ply' magic")),
    }
    let mut count: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut last = 1;
    loop {
        let Some((ln, line)) = next() else {
            return Err(parse_error(path, last, "unterminated header"));
        };
        last = ln;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", fmt, ..] if *fmt != "ascii" => {
                return Err(parse_error(path, ln, format!("unsupported format {fmt}")));
            }
            ["element", name, n] => {
                in_vertex = *name == "vertex";
                if in_vertex {
                    count = Some(n.parse().map_err(|_| parse_error(path, ln, "bad vertex count"))?);
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(parse_error(path, ln, "list properties on vertices are unsupported"));
            }
            ["property", _, name] if in_vertex => props.push(name.to_string()),
            _ => {}
        }
    }
    let count = count.ok_or_else(|| parse_error(path, last, "no vertex element"))?;
    let col = |name: &str| props.iter().position(|p| p == name);
    let (Some(xi), Some(yi), Some(zi)) = (col("x"), col("y"), col("z")) else {
        return Err(parse_error(path, last, "vertex element needs x, y, z"));
    };
    let (di, ei) = (col("edge_dist"), col("is_edge"));
    let mut cloud = PointCloud::new(Vec::with_capacity(count));
    let mut dist = Vec::new();
    let mut flag = Vec::new();
    while cloud.points.len() < count {
        let Some((ln, line)) = next() else {
            return Err(parse_error(
                path,
                last,
                format!("expected {count} vertices, found {}", cloud.points.len()),
            ));
        };
        last = ln;
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_error(path, ln, format!("bad number: {e}")))?;
        if v.len() != props.len() {
            return Err(parse_error(path, ln, format!("expected {} values, got {}", props.len(), v.len())));
        }
        cloud.points.push(Point3::new(v[xi], v[yi], v[zi]));
        if let Some(i) = di {
            dist.push(v[i]);
        }
        if let Some(i) = ei {
            flag.push(v[i] != 0.0);
        }
    }
    cloud.edge_dist = di.map(|_| dist);
    cloud.is_edge = ei.map(|_| flag);
    Ok(cloud)
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    parse_ply(&std::fs::read_to_string(path)?, path)
}

pub fn format_ply(cloud: &PointCloud) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    writeln!(s, "element vertex {}", cloud.len()).expect("write to string");
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    if cloud.edge_dist.is_some() {
        s.push_str("property double edge_dist\n");
    }
    if cloud.is_edge.is_some() {
        s.push_str("property uchar is_edge\n");
    }
    s.push_str("end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        write!(s, "{} {} {}", p.x, p.y, p.z).expect("write to string");
        if let Some(d) = &cloud.edge_dist {
            write!(s, " {}", d[i]).expect("write to string");
        }
        if let Some(f) = &cloud.is_edge {
            write!(s, " {}", u8::from(f[i])).expect("write to string");
        }
        s.push('\n');
    }
    s
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    std::fs::write(path, format_ply(cloud))?;
    Ok(())
}
