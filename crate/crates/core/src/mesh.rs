//! Triangle meshes with annotated sharp-edge segments, and point clouds.

use crate::error::{Error, Result};
use crate::geom::{bounds, Point3, Segment, Similarity, Triangle};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Point3>,
    pub faces: Vec<[usize; 3]>,
    /// Annotated sharp edges, in the same frame as `vertices`.
    pub edges: Vec<Segment>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Point3>, faces: Vec<[usize; 3]>, edges: Vec<Segment>) -> Self {
        Self {
            vertices,
            faces,
            edges,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, i: usize) -> Triangle {
        let [a, b, c] = self.faces[i];
        Triangle::new(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn triangles(&self) -> Vec<Triangle> {
        (0..self.faces.len()).map(|i| self.triangle(i)).collect()
    }

    /// Applies `t` to vertices and edge annotations alike.
    pub fn transformed(&self, t: &Similarity) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|&p| t.apply(p)).collect(),
            faces: self.faces.clone(),
            edges: self.edges.iter().map(|s| s.map(|p| t.apply(p))).collect(),
        }
    }

    /// Radius of the smallest origin-centered sphere holding every vertex.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }
}

/// Uniformly scales and translates `mesh` so its bounding box is centered at
/// the origin with longest side 2. Returns the normalized mesh and the
/// original→normalized transform.
pub fn normalize_mesh(mesh: &TriMesh) -> Result<(TriMesh, Similarity)> {
    let used: Vec<Point3> = mesh
        .faces
        .iter()
        .flat_map(|f| f.iter().map(|&i| mesh.vertices[i]))
        .collect();
    let (lo, hi) = bounds(&used).ok_or(Error::EmptyMesh)?;
    let center = (lo + hi) * 0.5;
    let ext = hi - lo;
    let longest = ext.x.max(ext.y).max(ext.z);
    let scale = if longest > 0.0 { 2.0 / longest } else { 1.0 };
    let t = Similarity {
        scale,
        translation: -center * scale,
    };
    Ok((mesh.transformed(&t), t))
}

/// Unordered samples with optional per-point attributes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    /// Regressed point-to-edge distance.
    pub edge_dist: Option<Vec<f64>>,
    pub is_edge: Option<Vec<bool>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            edge_dist: None,
            is_edge: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn edge_flag(&self, i: usize) -> bool {
        self.is_edge.as_ref().is_some_and(|f| f[i])
    }

    /// Concatenates clouds. Attributes survive only if every part carries them.
    pub fn concat(parts: Vec<PointCloud>) -> PointCloud {
        let all_dist = parts.iter().all(|p| p.edge_dist.is_some());
        let all_flag = parts.iter().all(|p| p.is_edge.is_some());
        let mut out = PointCloud::default();
        let mut dist = Vec::new();
        let mut flag = Vec::new();
        for p in parts {
            out.points.extend_from_slice(&p.points);
            if let Some(d) = p.edge_dist {
                dist.extend(d);
            }
            if let Some(f) = p.is_edge {
                flag.extend(f);
            }
        }
        if all_dist && !out.points.is_empty() {
            out.edge_dist = Some(dist);
        }
        if all_flag && !out.points.is_empty() {
            out.is_edge = Some(flag);
        }
        out
    }
}

/// Closed primitive meshes with their sharp edges annotated, normalized to
/// `[-1, 1]^3`.
pub mod primitives {
    use super::*;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    fn edges_from(vertices: &[Point3], pairs: &[(usize, usize)]) -> Vec<Segment> {
        pairs
            .iter()
            .map(|&(a, b)| Segment::new(vertices[a], vertices[b]))
            .collect()
    }

    /// Axis-aligned cube `[-1, 1]^3`, outward-facing, all 12 edges annotated.
    pub fn cube() -> TriMesh {
        let v = vec![
            p(-1.0, -1.0, -1.0),
            p(1.0, -1.0, -1.0),
            p(1.0, 1.0, -1.0),
            p(-1.0, 1.0, -1.0),
            p(-1.0, -1.0, 1.0),
            p(1.0, -1.0, 1.0),
            p(1.0, 1.0, 1.0),
            p(-1.0, 1.0, 1.0),
        ];
        let faces = vec![
            [0, 2, 1],
            [0, 3, 2],
            [4, 5, 6],
            [4, 6, 7],
            [0, 1, 5],
            [0, 5, 4],
            [3, 6, 2],
            [3, 7, 6],
            [0, 4, 7],
            [0, 7, 3],
            [1, 2, 6],
            [1, 6, 5],
        ];
        let pairs = [
            (0, 1),
            (1, 2),
            (2, 3),
            (3, 0),
            (4, 5),
            (5, 6),
            (6, 7),
            (7, 4),
            (0, 4),
            (1, 5),
            (2, 6),
            (3, 7),
        ];
        let edges = edges_from(&v, &pairs);
        TriMesh::new(v, faces, edges)
    }

    /// Right triangular prism: the triangle `(-1,-1), (1,-1), (-1,1)` in xz
    /// extruded along y over `[-1, 1]`. All 9 edges annotated.
    pub fn wedge() -> TriMesh {
        let v = vec![
            p(-1.0, -1.0, -1.0),
            p(1.0, -1.0, -1.0),
            p(-1.0, -1.0, 1.0),
            p(-1.0, 1.0, -1.0),
            p(1.0, 1.0, -1.0),
            p(-1.0, 1.0, 1.0),
        ];
        let faces = vec![
            // bottom (y = -1) and top (y = 1)
            [0, 1, 2],
            [3, 5, 4],
            // back (z = -1)
            [0, 3, 4],
            [0, 4, 1],
            // left (x = -1)
            [0, 2, 5],
            [0, 5, 3],
            // slanted face
            [1, 4, 5],
            [1, 5, 2],
        ];
        let pairs = [
            (0, 1),
            (1, 2),
            (2, 0),
            (3, 4),
            (4, 5),
            (5, 3),
            (0, 3),
            (1, 4),
            (2, 5),
        ];
        let edges = edges_from(&v, &pairs);
        TriMesh::new(v, faces, edges)
    }

    pub fn by_name(name: &str) -> Option<TriMesh> {
        match name {
            "cube" => Some(cube()),
            "wedge" => Some(wedge()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cube_normalizes_to_symmetric_cube() {
        let mut cube = primitives::cube();
        cube = cube.transformed(&Similarity {
            scale: 0.5,
            translation: Point3::new(0.5, 0.5, 0.5),
        });
        let (_, lo_hi) = (0, bounds(&cube.vertices).unwrap());
        assert_eq!(lo_hi, (Point3::ZERO, Point3::new(1.0, 1.0, 1.0)));
        let (norm, t) = normalize_mesh(&cube).unwrap();
        assert_eq!(t.scale, 2.0);
        assert_eq!(t.translation, Point3::new(-1.0, -1.0, -1.0));
        assert_eq!(norm.vertices, primitives::cube().vertices);
        assert_eq!(norm.edges, primitives::cube().edges);
    }

    #[test]
    fn normalized_mesh_is_fixed_point() {
        let (_, t) = normalize_mesh(&primitives::wedge()).unwrap();
        assert_eq!(t, Similarity::IDENTITY);
    }

    #[test]
    fn empty_mesh_errors() {
        assert!(matches!(normalize_mesh(&TriMesh::default()), Err(Error::EmptyMesh)));
    }

    #[test]
    fn primitives_are_closed_and_outward() {
        for mesh in [primitives::cube(), primitives::wedge()] {
            // Signed volume of a closed outward mesh is positive.
            let vol: f64 = mesh
                .triangles()
                .iter()
                .map(|t| t.a.dot(t.b.cross(t.c)) / 6.0)
                .sum();
            assert!(vol > 0.0);
            let mut edge_use = std::collections::HashMap::new();
            for f in &mesh.faces {
                for k in 0..3 {
                    let (a, b) = (f[k], f[(k + 1) % 3]);
                    *edge_use.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
            assert!(edge_use.values().all(|&c| c == 2));
        }
        assert_eq!(primitives::cube().edges.len(), 12);
        assert_eq!(primitives::wedge().edges.len(), 9);
    }
}
