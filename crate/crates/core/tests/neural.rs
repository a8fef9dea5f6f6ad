use bida_core::neural::{gradient_check, softmax, Activation, Head, NetworkParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_case(seed: u64) -> (NetworkParams, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=3);
    let mut dims = vec![rng.gen_range(1..=8)];
    for _ in 0..depth {
        dims.push(rng.gen_range(1..=8));
    }
    let act = if rng.gen_bool(0.5) { Activation::Tanh } else { Activation::ReLU };
    let head = if rng.gen_bool(0.5) { Head::Softmax } else { Head::Linear };
    let mut net = NetworkParams::random(&dims, act, head, &mut rng);
    for b in net.biases.iter_mut().flatten() {
        *b = rng.gen_range(-0.5..0.5);
    }
    let x: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..*dims.last().unwrap()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    (net, x, c)
}

#[test]
fn backprop_matches_central_differences_on_random_nets() {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let (net, x, c) = random_case(seed);
        worst = worst.max(gradient_check(&net, &x, &c, 1e-6));
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let (net, x, _) = random_case(7);
    let back = NetworkParams::from_json(&net.to_json()).unwrap();
    assert_eq!(back, net);
    assert_eq!(back.forward(&x).unwrap(), net.forward(&x).unwrap());
}

proptest! {
    #[test]
    fn softmax_is_a_simplex(logits in prop::collection::vec(-50.0f64..50.0, 1..10)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|x| *x >= 0.0 && *x <= 1.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn policy_output_is_a_simplex(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = NetworkParams::random(&[4, 6, 5], Activation::Tanh, Head::Softmax, &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let p = net.forward(&x).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}
