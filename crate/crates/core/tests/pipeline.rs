use edgepc::geom::{Point3, Similarity};
use edgepc::gradcheck::{roof_patch, tiny_network};
use edgepc::losses::{edge_term, surface_term, LossConfig};
use edgepc::network::init_params;
use edgepc::patching::Patch;
use edgepc::pipeline::*;
use edgepc::rng::rng_from;
use edgepc::spatial::KdTree;
use rand::Rng;

fn patch(seed: u64) -> Patch {
    let (points, gt_triangles, gt_segments) = roof_patch(64, &mut rng_from(seed));
    Patch {
        source_indices: (0..points.len()).collect(),
        points,
        centroid_index: 0,
        transform: Similarity::IDENTITY,
        gt_triangles,
        gt_segments,
        mesh_id: 0,
    }
}

fn tiny_train(epochs: u64, batch_size: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size,
        network: tiny_network(),
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn augmentation_off_is_identity() {
    let p = patch(0);
    assert_eq!(augment_patch(&p, &AugmentConfig::none(), &mut rng_from(1)), p);
}

#[test]
fn augmentation_is_seeded() {
    let p = patch(0);
    let cfg = AugmentConfig::default();
    let a = augment_patch(&p, &cfg, &mut rng_from(3));
    assert_eq!(a, augment_patch(&p, &cfg, &mut rng_from(3)));
    assert_ne!(a, augment_patch(&p, &cfg, &mut rng_from(4)));
    let only_permute = AugmentConfig {
        permute: true,
        ..AugmentConfig::none()
    };
    let a = augment_patch(&p, &only_permute, &mut rng_from(3));
    assert_ne!(a.points, p.points);
    for (i, q) in a.points.iter().enumerate() {
        assert_eq!(*q, p.points[a.source_indices[i]]);
    }
}

#[test]
fn joint_transforms_keep_surface_samples_on_surface() {
    let mut p = patch(1);
    let mut rng = rng_from(2);
    p.points = p
        .gt_triangles
        .iter()
        .cycle()
        .take(64)
        .map(|t| {
            let (u, v): (f64, f64) = (rng.random(), rng.random());
            let (u, v) = if u + v > 1.0 { (1.0 - u, 1.0 - v) } else { (u, v) };
            t.a + (t.b - t.a) * u + (t.c - t.a) * v
        })
        .collect();
    let cfg = AugmentConfig {
        noise: false,
        ..Default::default()
    };
    for seed in 0..10 {
        let a = augment_patch(&p, &cfg, &mut rng_from(seed));
        let s = surface_term(&a.points, &a.gt_triangles).unwrap().value;
        assert!(s < 1e-24, "{s}");
    }
}

#[test]
fn surface_and_edge_terms_scale_by_square_of_scale() {
    let p = patch(2);
    let mut rng = rng_from(5);
    let points: Vec<Point3> = p
        .points
        .iter()
        .map(|&q| q + Point3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
        .collect();
    let d = vec![0.0; points.len()];
    let delta = LossConfig::default().delta_d;
    let base = Patch { points, ..p };
    let s0 = surface_term(&base.points, &base.gt_triangles).unwrap().value;
    let e0 = edge_term(&base.points, &d, &base.gt_segments, delta).0.value;
    let cfg = AugmentConfig {
        noise: false,
        permute: false,
        ..Default::default()
    };
    for seed in 0..5 {
        let a = augment_patch(&base, &cfg, &mut rng_from(seed));
        let scale = a.points[0].dist(a.points[1]) / base.points[0].dist(base.points[1]);
        let s = surface_term(&a.points, &a.gt_triangles).unwrap().value;
        let e = edge_term(&a.points, &d, &a.gt_segments, delta).0.value;
        assert!(((s / s0) / (scale * scale) - 1.0).abs() < 1e-9);
        assert!(((e / e0) / (scale * scale) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn one_patch_one_step_is_finite() {
    let out = train(&[patch(0)], &tiny_train(1, 1), None, &mut NullSink).unwrap();
    assert_eq!(out.log.len(), 1);
    assert!(out.log[0].loss.joint.is_finite());
    assert_eq!(out.checkpoint.adam.step, 1);
    assert!(out.checkpoint.params.tensors().iter().all(|t| t.data.iter().all(|v| v.is_finite())));
}

#[test]
fn training_is_reproducible_and_resumable() {
    let data: Vec<Patch> = (0..4).map(patch).collect();
    let cfg = tiny_train(3, 2);
    let full = train(&data, &cfg, None, &mut NullSink).unwrap();
    assert_eq!(full.log.len(), 6);
    let again = train(&data, &cfg, None, &mut NullSink).unwrap();
    assert_eq!(full, again);

    let first = train(&data, &tiny_train(1, 2), None, &mut NullSink).unwrap();
    let rest = train(&data, &cfg, Some(first.checkpoint), &mut NullSink).unwrap();
    assert_eq!(rest.checkpoint, full.checkpoint);
    for (a, b) in rest.log.iter().zip(&full.log[2..]) {
        assert_eq!(a.step, b.step);
        assert!((a.loss.joint - b.loss.joint).abs() <= 1e-6);
    }
}

#[test]
fn csv_sink_logs_steps_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("model.ckpt");
    let mut buf = Vec::new();
    let mut sink = CsvSink::new(&mut buf, Some(ck.clone()), true).unwrap();
    let data: Vec<Patch> = (0..2).map(patch).collect();
    let out = train(&data, &tiny_train(2, 1), None, &mut sink).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], StepRecord::CSV_HEADER);
    assert_eq!(lines.len(), 1 + out.log.len());
    let saved = edgepc::io::checkpoint::read_checkpoint(&ck, Some(&tiny_network())).unwrap();
    assert_eq!(saved, out.checkpoint);
}

#[test]
fn training_rejects_bad_inputs() {
    assert!(matches!(
        train(&[], &tiny_train(1, 1), None, &mut NullSink),
        Err(edgepc::Error::EmptyDataset)
    ));
    assert!(train(&[patch(0)], &tiny_train(1, 2), None, &mut NullSink).is_err());
}

fn roof_cloud(n: usize) -> Vec<Point3> {
    let mut rng = rng_from(8);
    (0..n)
        .map(|_| {
            let x: f64 = rng.random_range(-1.0..1.0);
            Point3::new(x, rng.random_range(-1.0..1.0), -0.6 * x.abs())
        })
        .collect()
}

#[test]
fn consolidation_cardinality_and_zero_residual() {
    let cloud = roof_cloud(1500);
    let cfg = tiny_network();
    let mut params = init_params(&cfg, 0).unwrap();
    let ccfg = ConsolidateConfig::default();
    let out = consolidate(&cloud, &params, &ccfg).unwrap();
    assert_eq!(out.cloud.len(), out.patches * cfg.r * cfg.retained());
    assert_eq!(out.cloud.is_edge.as_ref().unwrap().len(), out.cloud.len());
    assert_eq!(out.cloud.edge_dist.as_ref().unwrap().len(), out.cloud.len());
    assert_eq!(out, consolidate(&cloud, &params, &ccfg).unwrap());

    params.zero_residual_head();
    let out = consolidate(&cloud, &params, &ccfg).unwrap();
    let tree = KdTree::new(&cloud);
    for &p in &out.cloud.points {
        assert!(tree.nearest(p).unwrap().dist_sq.sqrt() < 1e-12);
    }
}

#[test]
fn consolidation_needs_enough_points() {
    let params = init_params(&tiny_network(), 0).unwrap();
    assert!(consolidate(&roof_cloud(100), &params, &ConsolidateConfig::default()).is_err());
}
