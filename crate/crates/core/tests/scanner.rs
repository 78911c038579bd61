use edgepc::evaluation::surface_error_stats;
use edgepc::geom::{dist_to_mesh, Point3};
use edgepc::mesh::{primitives, TriMesh};
use edgepc::rng::rng_from;
use edgepc::scanner::*;

fn wall(z: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> (Vec<Point3>, Vec<[usize; 3]>) {
    let v = vec![
        Point3::new(x0, y0, z),
        Point3::new(x1, y0, z),
        Point3::new(x1, y1, z),
        Point3::new(x0, y1, z),
    ];
    (v, vec![[0, 1, 2], [0, 2, 3]])
}

fn camera_at_z(z: f64) -> Camera {
    Camera {
        position: Point3::new(0.0, 0.0, z),
        look_at: Point3::ZERO,
        up: Point3::new(0.0, 1.0, 0.0),
        vertical_fov: 50.0,
        width: 40,
        height: 30,
    }
}

#[test]
fn frame_filling_plane_depth_matches_ray_plane_geometry() {
    let (v, f) = wall(0.0, -100.0, 100.0, -100.0, 100.0);
    let mesh = TriMesh::new(v, f, vec![]);
    let cam = camera_at_z(2.0);
    let img = render_depth(&mesh, &cam);
    assert_eq!(img.foreground_count(), 40 * 30);
    // Range along a unit ray to the plane z = 0 from height 2.
    for y in 0..30 {
        for x in 0..40 {
            let dir = cam.ray_dir(x as f64 + 0.5, y as f64 + 0.5);
            let expected = 2.0 / -dir.z;
            assert!((img.get(x, y).unwrap() - expected).abs() < 1e-9);
        }
    }
    let (lo, hi) = img.foreground_range().unwrap();
    let corner = cam.ray_dir(0.5, 0.5);
    assert!(lo >= 2.0 && hi <= 2.0 / -corner.z + 1e-9);
}

#[test]
fn unjittered_wall_backprojects_onto_its_plane() {
    let (v, f) = wall(0.0, -100.0, 100.0, -100.0, 100.0);
    let mesh = TriMesh::new(v, f, vec![]);
    let cam = camera_at_z(2.0);
    let img = quantize_depth(&render_depth(&mesh, &cam), 1_000_000_000);
    let cloud = backproject(&img, &cam, 0.0, &mut rng_from(1));
    assert_eq!(cloud.len(), img.foreground_count());
    for p in &cloud.points {
        assert!(p.z.abs() < 1e-6);
    }
}

#[test]
fn nearer_wall_receives_more_samples() {
    let (mut v, mut f) = wall(-1.5 + 2.0, -0.6, -0.1, -0.25, 0.25);
    let (v2, f2) = wall(-2.5 + 2.0, 0.1, 0.6, -0.25, 0.25);
    f.extend(f2.iter().map(|t| [t[0] + 4, t[1] + 4, t[2] + 4]));
    v.extend(v2);
    let mesh = TriMesh::new(v, f, vec![]);
    let cam = camera_at_z(2.0);
    let cloud = backproject(&render_depth(&mesh, &cam), &cam, 0.0, &mut rng_from(2));
    let near = cloud.points.iter().filter(|p| p.z > 0.0).count();
    let far = cloud.len() - near;
    assert!(near > far && far > 0, "near {near} far {far}");
}

#[test]
fn scan_points_respect_noise_bound() {
    let cfg = ScanConfig {
        num_cameras: 6,
        width: 64,
        height: 48,
        n_q: 50,
        seed: 3,
        ..Default::default()
    };
    let mesh = primitives::wedge();
    let tris = mesh.triangles();
    for scan in scan_cameras(&mesh, &cfg).unwrap() {
        let half = half_level_spacing(&scan.raw, cfg.n_q);
        assert!(scan.quantized.distinct_foreground_values() <= cfg.n_q);
        let mut k = 0;
        for y in 0..scan.quantized.height {
            for x in 0..scan.quantized.width {
                let Some(d) = scan.quantized.get(x, y) else { continue };
                let bound = half + scan.camera.pixel_footprint(x, y, d, cfg.jitter) + 1e-6;
                let err = dist_to_mesh(scan.cloud.points[k], &tris).unwrap().0;
                assert!(err <= bound, "{err} > {bound}");
                k += 1;
            }
        }
        assert_eq!(k, scan.cloud.len());
    }
}

#[test]
fn coarser_quantization_is_noisier_on_cube() {
    let cube = primitives::cube();
    let rms = |n_q| {
        let cfg = ScanConfig {
            n_q,
            seed: 5,
            ..Default::default()
        };
        let cloud = virtual_scan(&cube, &cfg).unwrap();
        surface_error_stats(&cloud.points, &cube.triangles()).unwrap().rms
    };
    let (r120, r80, r50) = (rms(120), rms(80), rms(50));
    assert!(r50 > r80 && r80 > r120, "{r120} {r80} {r50}");
}

#[test]
fn scans_are_deterministic_and_union_grows() {
    let cfg = ScanConfig {
        width: 48,
        height: 36,
        seed: 21,
        ..Default::default()
    };
    let mesh = primitives::cube();
    let a = virtual_scan(&mesh, &cfg).unwrap();
    let b = virtual_scan(&mesh, &cfg).unwrap();
    let bits = |c: &edgepc::PointCloud| -> Vec<u64> {
        c.points.iter().flat_map(|p| p.to_array()).map(f64::to_bits).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    let single = virtual_scan(&mesh, &ScanConfig { num_cameras: 1, ..cfg.clone() }).unwrap();
    assert!(a.len() >= single.len() && !single.is_empty());
}
