mod common;

use common::fixtures::{crease, crease_mesh, planted_line, EDGE};
use edgepc::evaluation::surface_distances;
use edgepc::geom::{point_segment_distance, Point3};
use edgepc::refine::*;
use edgepc::rng::rng_from;
use edgepc::PointCloud;
use rand::Rng;

fn flagged(points: Vec<Point3>, labels: &[u8]) -> PointCloud {
    PointCloud {
        points,
        edge_dist: None,
        is_edge: Some(labels.iter().map(|&l| l == EDGE).collect()),
    }
}

#[test]
fn ransac_recovers_planted_line() {
    let (pts, a, b) = planted_line(1);
    let r = ransac_fit_edges(&pts, &RefineConfig::default(), &mut rng_from(2));
    assert_eq!(r.segments.len(), 1);
    assert_eq!(r.dropped, vec![100, 101, 102, 103, 104]);
    let s = r.segments[0];
    let truth = edgepc::Segment::new(a, b);
    for end in [s.p0, s.p1] {
        assert!(point_segment_distance(end, &truth).distance < 0.003);
    }
    assert!((s.length() - truth.length()).abs() < 0.01);
    for (i, q) in r.projected.iter().enumerate().take(100) {
        let q = q.expect("inlier projected");
        assert!(point_segment_distance(q, &s).distance < 1e-12);
        assert!(q.dist(pts[i]) < 0.003);
    }
}

#[test]
fn ransac_needs_min_inliers() {
    let pts: Vec<Point3> = (0..9).map(|i| Point3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
    let r = ransac_fit_edges(&pts, &RefineConfig::default(), &mut rng_from(0));
    assert!(r.segments.is_empty());
    assert_eq!(r.dropped.len(), 9);
}

#[test]
fn pca_groups_stop_at_edges() {
    for seed in 0..3 {
        let (pts, labels) = crease(0.002, seed);
        let is_edge: Vec<bool> = labels.iter().map(|&l| l == EDGE).collect();
        let r = pca_filter_surface(&pts, &is_edge, &RefineConfig::default()).unwrap();
        let covered: usize = r.groups.iter().map(Vec::len).sum();
        assert_eq!(covered, labels.iter().filter(|&&l| l != EDGE).count());
        for g in &r.groups {
            assert!(g.len() <= 30);
            assert!(g.iter().all(|&i| labels[i] == labels[g[0]] && labels[i] != EDGE));
        }
    }
}

#[test]
fn pca_projection_flattens_noisy_plane() {
    let (pts, labels) = crease(0.004, 7);
    let is_edge: Vec<bool> = labels.iter().map(|&l| l == EDGE).collect();
    let r = pca_filter_surface(&pts, &is_edge, &RefineConfig::default()).unwrap();
    let mesh = crease_mesh().triangles();
    let before: f64 = surface_distances(&pts, &mesh).unwrap().iter().sum();
    let after: f64 = surface_distances(&r.points, &mesh).unwrap().iter().sum();
    assert!(after < 0.5 * before, "{after} vs {before}");
    for (i, p) in r.points.iter().enumerate() {
        if is_edge[i] {
            assert_eq!(*p, pts[i]);
        }
    }
}

#[test]
fn dart_throwing_respects_min_distance() {
    let mut rng = rng_from(3);
    let mut cube = |n: usize| -> Vec<Point3> {
        (0..n)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect()
    };
    let original = cube(3000);
    let refined = cube(200);
    let h = 0.03;
    let added = fill_gaps(&refined, &original, h, &mut rng_from(4));
    assert!(!added.is_empty());
    for (i, p) in added.iter().enumerate() {
        assert!(refined.iter().all(|q| q.dist(*p) >= h));
        assert!(added[..i].iter().all(|q| q.dist(*p) >= h));
        assert!(original.contains(p));
    }
    assert_eq!(added, fill_gaps(&refined, &original, h, &mut rng_from(4)));
}

#[test]
fn refinement_rounds_settle() {
    let (pts, labels) = crease(0.004, 5);
    let cfg = RefineConfig::default();
    let out = refine(&flagged(pts.clone(), &labels), &pts, &cfg).unwrap();
    assert_eq!(out.displacement.len(), 3);
    assert!(out.displacement[0] > 0.0);
    for w in out.displacement.windows(2) {
        assert!(w[1] <= w[0] + 1e-9, "{:?}", out.displacement);
    }
    assert_eq!(out.added, 0);
    assert_eq!(out.cloud.len(), pts.len());
    assert_eq!(out.segments.len(), 1);
    let flags = out.cloud.is_edge.as_ref().unwrap();
    assert_eq!(flags.iter().filter(|&&f| f).count(), labels.iter().filter(|&&l| l == EDGE).count());
    assert_eq!(out, refine(&flagged(pts.clone(), &labels), &pts, &cfg).unwrap());
}

#[test]
fn refinement_does_not_move_points_off_matching_geometry() {
    let mesh = crease_mesh().triangles();
    for seed in 0..3 {
        let (pts, labels) = crease(0.004, 10 + seed);
        let out = refine(&flagged(pts.clone(), &labels), &pts, &RefineConfig::default()).unwrap();
        let mean = |p: &[Point3]| {
            let d = surface_distances(p, &mesh).unwrap();
            d.iter().sum::<f64>() / d.len() as f64
        };
        assert!(mean(&out.cloud.points) <= mean(&pts) + 1e-9);
    }
}

#[test]
fn stray_edge_flags_are_demoted() {
    let (pts, mut labels) = crease(0.0, 0);
    labels[0] = EDGE;
    let out = refine(&flagged(pts.clone(), &labels), &pts, &RefineConfig::default()).unwrap();
    assert!(!out.cloud.edge_flag(0));
}
