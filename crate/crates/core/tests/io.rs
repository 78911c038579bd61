use std::path::Path;

use edgepc::geom::{Point3, Segment, Similarity, Triangle};
use edgepc::io::checkpoint::*;
use edgepc::io::dataset::*;
use edgepc::io::edges::*;
use edgepc::io::obj::*;
use edgepc::io::ply::*;
use edgepc::network::{init_params, NetworkConfig};
use edgepc::patching::Patch;
use edgepc::pipeline::AdamState;
use edgepc::rng::rng_from;
use edgepc::{Error, PointCloud, TriMesh};
use rand::Rng;

fn p(x: f64, y: f64, z: f64) -> Point3 {
    Point3::new(x, y, z)
}

fn here() -> &'static Path {
    Path::new("fixture")
}

#[test]
fn obj_single_triangle_round_trip() {
    let mesh = TriMesh::new(vec![p(0.1, 0.2, 0.3), p(1.0 / 3.0, 0.0, -2.5), p(0.0, 1e-17, 7.0)], vec![[0, 1, 2]], vec![]);
    let back = parse_obj(&format_obj(&mesh), here()).unwrap();
    assert_eq!(back.vertices, mesh.vertices);
    assert_eq!(back.faces, mesh.faces);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.obj");
    write_obj(&path, &mesh).unwrap();
    assert_eq!(read_obj(&path).unwrap().faces, mesh.faces);
}

#[test]
fn obj_quad_fans_into_two_triangles() {
    let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n", here()).unwrap();
    assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
}

#[test]
fn obj_negative_indices_resolve_relative_to_current_vertices() {
    // Hand-resolved: after 4 vertices, -1 is vertex 4 (index 3) and -4 is
    // vertex 1; the face after the 5th vertex sees -1 as index 4.
    let text = "# fixture\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf -4 -3 -1\nv 2 2 2\nf 1/1 -2/5/7 -1//3\n";
    let m = parse_obj(text, here()).unwrap();
    assert_eq!(m.faces, vec![[0, 1, 3], [0, 3, 4]]);
}

#[test]
fn obj_errors_carry_line_numbers() {
    let err = parse_obj("v 0 0 0\nv 1 0\n", here()).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    let err = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n", here()).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 4, .. }), "{err:?}");
}

#[test]
fn edges_round_trip_and_comments() {
    let segs = vec![
        Segment::new(p(0.0, 0.0, 0.0), p(1.0, 0.1, -0.2)),
        Segment::new(p(0.1f64.sqrt(), 2.0, 3.0), p(4.0, 5.0, 6.0)),
    ];
    assert_eq!(parse_edges(&format_edges(&segs), here()).unwrap(), segs);
    let parsed = parse_edges("# c\n\n0 0 0 1 1 1 # tail\n", here()).unwrap();
    assert_eq!(parsed, vec![Segment::new(p(0.0, 0.0, 0.0), p(1.0, 1.0, 1.0))]);
    let err = parse_edges("0 0 0 1 1\n", here()).unwrap_err();
    assert!(matches!(err, Error::Parse { line: 1, .. }));
}

#[test]
fn ply_round_trip_is_exact() {
    let cloud = PointCloud {
        points: vec![p(0.1, -0.2, 1.0 / 3.0), p(1e-300, 2.5e10, -0.0), p(7.0, 8.0, 9.0)],
        edge_dist: Some(vec![0.01, 1.0 / 7.0, 0.0]),
        is_edge: Some(vec![true, false, true]),
    };
    assert_eq!(parse_ply(&format_ply(&cloud), here()).unwrap(), cloud);
    let plain = PointCloud::new(cloud.points.clone());
    let back = parse_ply(&format_ply(&plain), here()).unwrap();
    assert_eq!(back, plain);
    assert!(!back.edge_flag(0));
}

#[test]
fn ply_mixed_properties() {
    let text = "ply\nformat ascii 1.0\ncomment hand built\nelement vertex 2\nproperty float nx\nproperty float x\nproperty uchar is_edge\nproperty float y\nproperty float z\nproperty float confidence\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n9 1 1 2 3 0.5\n9 4 0 5 6 0.25\n";
    let c = parse_ply(text, here()).unwrap();
    assert_eq!(c.points, vec![p(1.0, 2.0, 3.0), p(4.0, 5.0, 6.0)]);
    assert_eq!(c.is_edge, Some(vec![true, false]));
    assert_eq!(c.edge_dist, None);
}

#[test]
fn ply_count_mismatch_is_an_error() {
    let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\nend_header\n0 0 0\n1 1 1\n";
    assert!(matches!(parse_ply(text, here()), Err(Error::Parse { .. })));
    let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty double x\nproperty double y\nproperty double z\nend_header\n0 0\n";
    assert!(matches!(parse_ply(text, here()), Err(Error::Parse { line: 8, .. })));
}

fn random_patch(rng: &mut impl Rng, n: usize, id: u32) -> Patch {
    let centroid_index = rng.random_range(0..1000);
    let source_indices = (0..n).map(|_| rng.random_range(0..10_000)).collect();
    let scale = rng.random();
    let mut pt = || p(rng.random(), rng.random(), rng.random());
    Patch {
        points: (0..n).map(|_| pt()).collect(),
        centroid_index,
        transform: Similarity {
            scale,
            translation: pt(),
        },
        gt_triangles: (0..3).map(|_| Triangle::new(pt(), pt(), pt())).collect(),
        gt_segments: (0..2).map(|_| Segment::new(pt(), pt())).collect(),
        source_indices,
        mesh_id: id,
    }
}

#[test]
fn dataset_round_trip_is_bit_exact() {
    let mut rng = rng_from(4);
    let patches: Vec<Patch> = (0..5).map(|i| random_patch(&mut rng, 16, i)).collect();
    let bytes = encode_dataset(16, &patches).unwrap();
    let (n_hat, back) = decode_dataset(&bytes).unwrap();
    assert_eq!(n_hat, 16);
    assert_eq!(back, patches);
    assert_eq!(encode_dataset(16, &back).unwrap(), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.bin");
    write_dataset(&path, 16, &patches).unwrap();
    assert_eq!(read_dataset(&path).unwrap().1, patches);

    assert!(decode_dataset(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] ^= 1;
    assert!(decode_dataset(&bad).is_err());
    assert!(encode_dataset(8, &patches).is_err());
}

fn tiny() -> NetworkConfig {
    NetworkConfig {
        n_hat: 64,
        r: 2,
        ..Default::default()
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let params = init_params(&tiny(), 3).unwrap();
    let mut adam = AdamState::new(&params.tensors());
    let mut rng = rng_from(5);
    for t in adam.m.iter_mut().chain(adam.v.iter_mut()) {
        t.data.iter_mut().for_each(|v| *v = rng.random());
    }
    adam.step = 17;
    let ck = Checkpoint {
        seed: 99,
        epoch: 4,
        params,
        adam,
    };
    let bytes = encode_checkpoint(&ck);
    let back = decode_checkpoint(&bytes, Some(&tiny())).unwrap();
    assert_eq!(back, ck);
    assert_eq!(encode_checkpoint(&back), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.ckpt");
    write_checkpoint(&path, &ck).unwrap();
    assert_eq!(read_checkpoint(&path, None).unwrap(), ck);
}

#[test]
fn checkpoint_refuses_other_architectures() {
    let params = init_params(&tiny(), 0).unwrap();
    let ck = Checkpoint {
        seed: 0,
        epoch: 0,
        adam: AdamState::new(&params.tensors()),
        params,
    };
    let bytes = encode_checkpoint(&ck);
    let other = NetworkConfig { r: 4, ..tiny() };
    assert!(matches!(decode_checkpoint(&bytes, Some(&other)), Err(Error::ArchitectureMismatch { .. })));
}
