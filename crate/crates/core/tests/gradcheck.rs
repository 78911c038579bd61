use edgepc::gradcheck::*;
use edgepc::losses::LossConfig;

#[test]
fn loss_terms_match_central_differences() {
    for seed in [0, 1] {
        let e = check_losses(seed, 100, &LossConfig::default()).unwrap();
        println!("seed {seed}: {e:?}");
        assert_eq!(e.fixtures, 100);
        assert!(e.edge_active > 50 && e.repulsion_active > 50, "{e:?}");
        assert!(e.max() < LOSS_TOLERANCE, "{e:?}");
    }
}

#[test]
fn network_parameters_match_central_differences() {
    for seed in [0, 1, 2] {
        let c = check_network(seed, 20, &LossConfig::default()).unwrap();
        for s in &c.samples {
            println!("seed {seed}: {s:?}");
        }
        assert!(c.max_error < NETWORK_TOLERANCE, "seed {seed}: {}", c.max_error);
        assert!(c.samples.iter().any(|s| s.2.abs() > 1e-6), "all sampled gradients vanish");
    }
}
