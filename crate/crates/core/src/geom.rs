//! Exact point-to-triangle and point-to-segment distance kernels.
//!
//! Every kernel returns the closest point on the primitive along with the
//! Voronoi feature that realizes it. Gradients of squared distances are
//! `2 (p - closest)`, which is continuous across feature boundaries, so the
//! losses never need per-region derivative code.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

/// A point (or vector) in model space.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Displacements share the point representation.
pub type Vec3 = Point3;

impl Point3 {
    pub const ZERO: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    #[inline]
    pub fn dist_sq(self, o: Self) -> f64 {
        (self - o).norm_sq()
    }

    #[inline]
    pub fn dist(self, o: Self) -> f64 {
        self.dist_sq(o).sqrt()
    }

    /// Unit vector in the same direction, or `None` for (near) zero vectors.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > 1e-300 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn min_components(self, o: Self) -> Self {
        Self::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn max_components(self, o: Self) -> Self {
        Self::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn lerp(self, o: Self, t: f64) -> Self {
        self + (o - self) * t
    }
}

impl Add for Point3 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Self;
    #[inline]
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point3 {
    type Output = Self;
    #[inline]
    fn div(self, s: f64) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Point3 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl AddAssign for Point3 {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl SubAssign for Point3 {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl Index<usize> for Point3 {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Point3 index {i} out of range"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub a: Point3,
    pub b: Point3,
    pub c: Point3,
}

impl Triangle {
    pub const fn new(a: Point3, b: Point3, c: Point3) -> Self {
        Self { a, b, c }
    }

    pub fn map(&self, f: impl Fn(Point3) -> Point3) -> Self {
        Self::new(f(self.a), f(self.b), f(self.c))
    }

    pub fn vertices(&self) -> [Point3; 3] {
        [self.a, self.b, self.c]
    }

    /// Twice the area vector (unnormalized normal).
    pub fn area_vector(&self) -> Vec3 {
        (self.b - self.a).cross(self.c - self.a)
    }

    pub fn is_degenerate(&self) -> bool {
        let ab = self.b - self.a;
        let ac = self.c - self.a;
        let bc = self.c - self.b;
        let longest = ab.norm_sq().max(ac.norm_sq()).max(bc.norm_sq());
        let cross = ab.cross(ac).norm_sq();
        longest == 0.0 || cross <= 1e-24 * longest * longest
    }

    pub fn edges(&self) -> [Segment; 3] {
        [
            Segment::new(self.a, self.b),
            Segment::new(self.b, self.c),
            Segment::new(self.c, self.a),
        ]
    }

    fn bbox_dist_sq(&self, p: Point3) -> f64 {
        let lo = self.a.min_components(self.b).min_components(self.c);
        let hi = self.a.max_components(self.b).max_components(self.c);
        let dx = (lo.x - p.x).max(0.0).max(p.x - hi.x);
        let dy = (lo.y - p.y).max(0.0).max(p.y - hi.y);
        let dz = (lo.z - p.z).max(0.0).max(p.z - hi.z);
        dx * dx + dy * dy + dz * dz
    }

    /// Barycentric coordinates `(u, v, w)` with `q = u a + v b + w c` for a
    /// point in the triangle's plane.
    pub fn barycentric(&self, q: Point3) -> [f64; 3] {
        let v0 = self.b - self.a;
        let v1 = self.c - self.a;
        let v2 = q - self.a;
        let d00 = v0.dot(v0);
        let d01 = v0.dot(v1);
        let d11 = v1.dot(v1);
        let d20 = v2.dot(v0);
        let d21 = v2.dot(v1);
        let denom = d00 * d11 - d01 * d01;
        let v = (d11 * d20 - d01 * d21) / denom;
        let w = (d00 * d21 - d01 * d20) / denom;
        [1.0 - v - w, v, w]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub p0: Point3,
    pub p1: Point3,
}

impl Segment {
    pub const fn new(p0: Point3, p1: Point3) -> Self {
        Self { p0, p1 }
    }

    pub fn map(&self, f: impl Fn(Point3) -> Point3) -> Self {
        Self::new(f(self.p0), f(self.p1))
    }

    pub fn length(&self) -> f64 {
        self.p0.dist(self.p1)
    }

    pub fn at(&self, t: f64) -> Point3 {
        self.p0.lerp(self.p1, t)
    }

    /// Parameter of a point lying on the segment, in `[0, 1]`.
    pub fn parameter_of(&self, q: Point3) -> f64 {
        let d = self.p1 - self.p0;
        let len_sq = d.norm_sq();
        if len_sq == 0.0 {
            0.0
        } else {
            ((q - self.p0).dot(d) / len_sq).clamp(0.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TriangleRegion {
    Face,
    EdgeAB,
    EdgeBC,
    EdgeCA,
    VertexA,
    VertexB,
    VertexC,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SegmentRegion {
    Interior,
    Start,
    End,
}

/// Feature of the primitive that realizes the closest point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    Triangle(TriangleRegion),
    Segment(SegmentRegion),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosestPoint {
    pub distance: f64,
    pub distance_sq: f64,
    pub closest: Point3,
    pub region: Region,
}

impl ClosestPoint {
    fn new(p: Point3, closest: Point3, region: Region) -> Self {
        let distance_sq = p.dist_sq(closest);
        Self {
            distance: distance_sq.sqrt(),
            distance_sq,
            closest,
            region,
        }
    }

    /// Gradient of the squared distance with respect to the query point.
    pub fn grad_sq(&self, p: Point3) -> Vec3 {
        (p - self.closest) * 2.0
    }
}

pub fn point_segment_distance(p: Point3, seg: &Segment) -> ClosestPoint {
    let d = seg.p1 - seg.p0;
    let len_sq = d.norm_sq();
    let t = if len_sq > 0.0 {
        (p - seg.p0).dot(d) / len_sq
    } else {
        0.0
    };
    if t <= 0.0 {
        ClosestPoint::new(p, seg.p0, Region::Segment(SegmentRegion::Start))
    } else if t >= 1.0 {
        ClosestPoint::new(p, seg.p1, Region::Segment(SegmentRegion::End))
    } else {
        ClosestPoint::new(p, seg.p0 + d * t, Region::Segment(SegmentRegion::Interior))
    }
}

/// Closest point on a closed triangle, classified into one of the seven
/// Voronoi regions (face, three edges, three vertices).
pub fn point_triangle_distance(p: Point3, tri: &Triangle) -> ClosestPoint {
    use TriangleRegion::*;
    let tri_region = |r| Region::Triangle(r);

    if tri.is_degenerate() {
        return degenerate_triangle_distance(p, tri);
    }

    let (a, b, c) = (tri.a, tri.b, tri.c);
    let ab = b - a;
    let ac = c - a;

    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ClosestPoint::new(p, a, tri_region(VertexA));
    }

    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return ClosestPoint::new(p, b, tri_region(VertexB));
    }

    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return ClosestPoint::new(p, a + ab * v, tri_region(EdgeAB));
    }

    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return ClosestPoint::new(p, c, tri_region(VertexC));
    }

    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return ClosestPoint::new(p, a + ac * w, tri_region(EdgeCA));
    }

    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return ClosestPoint::new(p, b + (c - b) * w, tri_region(EdgeBC));
    }

    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    ClosestPoint::new(p, a + ab * v + ac * w, tri_region(Face))
}

// Zero-area triangles reduce to their three edges.
fn degenerate_triangle_distance(p: Point3, tri: &Triangle) -> ClosestPoint {
    use TriangleRegion::*;
    let edge_regions = [
        (EdgeAB, VertexA, VertexB),
        (EdgeBC, VertexB, VertexC),
        (EdgeCA, VertexC, VertexA),
    ];
    let mut best: Option<ClosestPoint> = None;
    for (seg, (edge, start, end)) in tri.edges().iter().zip(edge_regions) {
        let mut cp = point_segment_distance(p, seg);
        cp.region = Region::Triangle(match cp.region {
            Region::Segment(SegmentRegion::Interior) => edge,
            Region::Segment(SegmentRegion::Start) => start,
            _ => end,
        });
        if best.is_none_or(|b| cp.distance_sq < b.distance_sq) {
            best = Some(cp);
        }
    }
    best.expect("triangle has three edges")
}

/// Nearest triangle to `p`: `(closest point result, triangle index)`.
/// Ties keep the lowest index.
pub fn closest_on_mesh(p: Point3, tris: &[Triangle]) -> Result<(ClosestPoint, usize)> {
    if tris.is_empty() {
        return Err(Error::NoSurface);
    }
    let mut best = point_triangle_distance(p, &tris[0]);
    let mut best_idx = 0;
    for (i, tri) in tris.iter().enumerate().skip(1) {
        if tri.bbox_dist_sq(p) >= best.distance_sq {
            continue;
        }
        let cp = point_triangle_distance(p, tri);
        if cp.distance_sq < best.distance_sq {
            best = cp;
            best_idx = i;
        }
    }
    Ok((best, best_idx))
}

/// Nearest segment to `p`: `(closest point result, segment index)`.
pub fn closest_on_edges(p: Point3, segs: &[Segment]) -> Result<(ClosestPoint, usize)> {
    if segs.is_empty() {
        return Err(Error::NoEdges);
    }
    let mut best = point_segment_distance(p, &segs[0]);
    let mut best_idx = 0;
    for (i, seg) in segs.iter().enumerate().skip(1) {
        let cp = point_segment_distance(p, seg);
        if cp.distance_sq < best.distance_sq {
            best = cp;
            best_idx = i;
        }
    }
    Ok((best, best_idx))
}

pub fn dist_to_mesh(p: Point3, tris: &[Triangle]) -> Result<(f64, usize)> {
    closest_on_mesh(p, tris).map(|(cp, i)| (cp.distance, i))
}

pub fn dist_to_edges(p: Point3, segs: &[Segment]) -> Result<(f64, usize)> {
    closest_on_edges(p, segs).map(|(cp, i)| (cp.distance, i))
}

/// Gradient of the squared distance to the nearest triangle.
pub fn grad_sq_dist_to_mesh(p: Point3, tris: &[Triangle]) -> Result<Vec3> {
    closest_on_mesh(p, tris).map(|(cp, _)| cp.grad_sq(p))
}

/// Gradient of the squared distance to the nearest edge segment.
pub fn grad_sq_dist_to_edges(p: Point3, segs: &[Segment]) -> Result<Vec3> {
    closest_on_edges(p, segs).map(|(cp, _)| cp.grad_sq(p))
}

/// Axis-aligned bounds of a point set; `None` when empty.
pub fn bounds(points: &[Point3]) -> Option<(Point3, Point3)> {
    let first = *points.first()?;
    Some(points.iter().fold((first, first), |(lo, hi), &p| {
        (lo.min_components(p), hi.max_components(p))
    }))
}

/// Uniform scale followed by translation: `world = local * scale + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub translation: Vec3,
}

impl Default for Similarity {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Similarity {
    pub const IDENTITY: Similarity = Similarity {
        scale: 1.0,
        translation: Point3::ZERO,
    };

    #[inline]
    pub fn apply(&self, p: Point3) -> Point3 {
        p * self.scale + self.translation
    }

    #[inline]
    pub fn apply_inverse(&self, p: Point3) -> Point3 {
        (p - self.translation) / self.scale
    }

    pub fn inverse(&self) -> Similarity {
        Similarity {
            scale: 1.0 / self.scale,
            translation: -self.translation / self.scale,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_tri() -> Triangle {
        Triangle::new(
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        )
    }

    #[test]
    fn projection_inside_face() {
        let r = point_triangle_distance(Point3::new(0.25, 0.25, 1.0), &unit_tri());
        assert!((r.distance - 1.0).abs() < 1e-12);
        assert_eq!(r.closest, Point3::new(0.25, 0.25, 0.0));
        assert_eq!(r.region, Region::Triangle(TriangleRegion::Face));
    }

    #[test]
    fn beyond_vertex_b() {
        let r = point_triangle_distance(Point3::new(2.0, 0.0, 0.0), &unit_tri());
        assert!((r.distance - 1.0).abs() < 1e-12);
        assert_eq!(r.closest, Point3::new(1.0, 0.0, 0.0));
        assert_eq!(r.region, Region::Triangle(TriangleRegion::VertexB));
    }

    #[test]
    fn all_seven_regions_reachable() {
        use TriangleRegion::*;
        let t = unit_tri();
        let cases = [
            (Point3::new(0.2, 0.2, 0.5), Face),
            (Point3::new(0.5, -1.0, 0.0), EdgeAB),
            (Point3::new(1.0, 1.0, 0.3), EdgeBC),
            (Point3::new(-1.0, 0.5, 0.0), EdgeCA),
            (Point3::new(-1.0, -1.0, 0.0), VertexA),
            (Point3::new(3.0, -0.5, 0.0), VertexB),
            (Point3::new(-0.5, 3.0, 0.0), VertexC),
        ];
        for (p, region) in cases {
            assert_eq!(point_triangle_distance(p, &t).region, Region::Triangle(region), "{p:?}");
        }
    }

    #[test]
    fn segment_cases() {
        let s = Segment::new(Point3::ZERO, Point3::new(1.0, 0.0, 0.0));
        let r = point_segment_distance(Point3::new(0.5, 1.0, 0.0), &s);
        assert_eq!(r.distance, 1.0);
        assert_eq!(r.closest, Point3::new(0.5, 0.0, 0.0));
        assert_eq!(r.region, Region::Segment(SegmentRegion::Interior));
        assert_eq!(s.parameter_of(r.closest), 0.5);

        let r = point_segment_distance(Point3::new(-3.0, 4.0, 0.0), &s);
        assert_eq!(r.distance, 5.0);
        assert_eq!(r.closest, Point3::ZERO);
        assert_eq!(r.region, Region::Segment(SegmentRegion::Start));
    }

    #[test]
    fn zero_length_segment_is_point_distance() {
        let q = Point3::new(1.0, 2.0, 3.0);
        let s = Segment::new(q, q);
        let r = point_segment_distance(Point3::new(1.0, 2.0, 5.0), &s);
        assert_eq!(r.distance, 2.0);
    }

    #[test]
    fn degenerate_triangle_falls_back_to_edges() {
        let t = Triangle::new(
            Point3::ZERO,
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(2.0, 0.0, 0.0),
        );
        let r = point_triangle_distance(Point3::new(1.5, 1.0, 0.0), &t);
        assert!((r.distance - 1.0).abs() < 1e-12);
        let point = Triangle::new(Point3::ZERO, Point3::ZERO, Point3::ZERO);
        let r = point_triangle_distance(Point3::new(0.0, 3.0, 4.0), &point);
        assert_eq!(r.distance, 5.0);
    }

    #[test]
    fn mesh_reduction_and_errors() {
        let near = unit_tri();
        let far = near.map(|p| p + Point3::new(0.0, 0.0, 1.0));
        let p = Point3::new(0.2, 0.2, -1.0);
        assert_eq!(dist_to_mesh(p, &[far, near]).unwrap(), (1.0, 1));
        assert_eq!(dist_to_mesh(Point3::new(1.0, 0.0, 0.0), &[near]).unwrap().0, 0.0);
        assert!(matches!(dist_to_mesh(p, &[]), Err(Error::NoSurface)));
        assert!(matches!(dist_to_edges(p, &[]), Err(Error::NoEdges)));
    }

    #[test]
    fn edge_reduction() {
        let s = Segment::new(Point3::ZERO, Point3::new(1.0, 0.0, 0.0));
        assert_eq!(dist_to_edges(Point3::new(1.0, 0.0, 0.0), &[s]).unwrap().0, 0.0);
        let (d, _) = dist_to_edges(Point3::new(0.4, 0.3, 0.0), &[s]).unwrap();
        assert!((d - 0.3).abs() < 1e-15);
    }

    #[test]
    fn squared_distance_gradients() {
        let t = unit_tri();
        assert_eq!(
            grad_sq_dist_to_mesh(Point3::new(0.3, 0.3, 0.0), &[t]).unwrap(),
            Point3::ZERO
        );
        assert_eq!(
            grad_sq_dist_to_mesh(Point3::new(0.0, 0.0, 1.0), &[t]).unwrap(),
            Point3::new(0.0, 0.0, 2.0)
        );
        let s = Segment::new(Point3::ZERO, Point3::new(1.0, 0.0, 0.0));
        assert_eq!(
            grad_sq_dist_to_edges(Point3::new(0.5, 0.0, 0.0), &[s]).unwrap(),
            Point3::ZERO
        );
        assert_eq!(
            grad_sq_dist_to_edges(Point3::new(0.5, 0.0, 0.5), &[s]).unwrap(),
            Point3::new(0.0, 0.0, 1.0)
        );
    }
}
