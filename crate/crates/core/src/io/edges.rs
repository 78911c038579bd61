//! Edge annotations: one segment per line as `x1 y1 z1 x2 y2 z2`; `#` starts
//! a comment.

use std::fmt::Write as _;
use std::path::Path;

use super::parse_error;
use crate::error::Result;
use crate::geom::{Point3, Segment};

pub fn parse_edges(text: &str, path: &Path) -> Result<Vec<Segment>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_error(path, ln + 1, format!("bad number: {e}")))?;
        if v.len() != 6 || v.iter().any(|x| !x.is_finite()) {
            return Err(parse_error(path, ln + 1, format!("expected 6 finite numbers, got {}", v.len())));
        }
        out.push(Segment::new(Point3::new(v[0], v[1], v[2]), Point3::new(v[3], v[4], v[5])));
    }
    Ok(out)
}

pub fn read_edges(path: &Path) -> Result<Vec<Segment>> {
    parse_edges(&std::fs::read_to_string(path)?, path)
}

pub fn format_edges(segs: &[Segment]) -> String {
    let mut s = String::new();
    for g in segs {
        let (a, b) = (g.p0, g.p1);
        writeln!(s, "{} {} {} {} {} {}", a.x, a.y, a.z, b.x, b.y, b.z).expect("write to string");
    }
    s
}

pub fn write_edges(path: &Path, segs: &[Segment]) -> Result<()> {
    std::fs::write(path, format_edges(segs))?;
    Ok(())
}
