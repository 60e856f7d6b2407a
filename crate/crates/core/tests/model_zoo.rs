use ascnet::model::*;
use ascnet::tensor::{Graph, Mode, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn seeded(arch: &ArchConfig, seed: u64) -> Network {
    let mut net = build_network(arch).unwrap();
    net.init_weights(seed);
    net
}

fn random_input(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * 128 * 256 * 3).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn named_variants_hit_budget_and_order() {
    let mut counts = Vec::new();
    for v in Variant::NAMED {
        let net = build_network(&ArchConfig::from_variant(v).unwrap()).unwrap();
        let n = count_parameters(net.spec()) as f64;
        let target = v.target_params().unwrap();
        assert!((n / target - 1.0).abs() <= 0.15, "{v}: {n} vs {target}");
        counts.push(n);
    }
    assert!(counts[3] < counts[2] && counts[2] < counts[1] && counts[1] < counts[0]);
    assert_eq!(counts, vec![9_537_367.0, 2_779_863.0, 701_804.0, 178_887.0]);
}

#[test]
fn total_matches_parameter_tensors_and_rows() {
    for v in Variant::NAMED {
        let net = build_network(&ArchConfig::from_variant(v).unwrap()).unwrap();
        let from_tensors: usize = net.params().iter().map(|p| p.value.numel()).sum();
        let from_rows: usize = net.spec().layers.iter().map(|l| l.params).sum();
        assert_eq!(net.spec().total_params, from_tensors);
        assert_eq!(net.spec().total_params, from_rows);
    }
}

#[test]
fn shape_chain_is_consistent() {
    for v in Variant::NAMED {
        let spec = build_network(&ArchConfig::from_variant(v).unwrap()).unwrap().spec().clone();
        assert_eq!(spec.layers[0].input, vec![128, 256, 3]);
        for pair in spec.layers.windows(2) {
            assert_eq!(pair[0].output, pair[1].input, "{} -> {}", pair[0].name, pair[1].name);
        }
        assert_eq!(spec.layers.last().unwrap().output, vec![10]);
    }
}

#[test]
fn block_dims_follow_pooling() {
    let spec = build_network(&ArchConfig::baseline()).unwrap().spec().clone();
    let out = |name: &str| spec.layers.iter().find(|l| l.name == name).unwrap().output.clone();
    assert_eq!(out("inception.rn"), vec![64, 128, 64]);
    assert_eq!(out("incres0.rn"), vec![32, 64, 128]);
    assert_eq!(out("incres1.rn"), vec![16, 32, 256]);
    assert_eq!(out("incres2.rn"), vec![8, 16, 512]);
}

#[test]
fn inc01_count_matches_enumeration() {
    // Branches (3x3, 1x1, 4x1) with widths 22/21/21 from 3 input channels,
    // each followed by BN, then a BN over the 64 concatenated channels.
    let branches = [(3 * 3, 22), (1, 21), (4, 21)];
    let expected: usize = branches.iter().map(|&(k, c)| k * 3 * c + c + 2 * c).sum::<usize>() + 2 * 64;
    let spec = build_network(&ArchConfig::baseline()).unwrap().spec().clone();
    assert_eq!(spec.layers[0].name, "inception.unit0");
    assert_eq!(spec.layers[0].params, expected);
}

#[test]
fn single_layer_counts() {
    let mut a = ArchConfig::red03();
    a.variant = Variant::Custom;
    a.inception_channels = vec![16];
    let net = build_network(&a).unwrap();
    let p = net.params();
    let conv = p.iter().find(|p| p.name == "incres0.unit0.b3x3.conv.w").unwrap().value.numel()
        + p.iter().find(|p| p.name == "incres0.unit0.b3x3.conv.b").unwrap().value.numel();
    assert_eq!(conv, 3 * 3 * 16 * 32 + 32);
    assert_eq!(conv, 4_640);

    let fc = embedding_classifier(2048, 10).unwrap();
    assert_eq!(fc.spec().layers[0].params, 2048 * 1024 + 1024);
    assert_eq!(fc.spec().layers.last().unwrap().params, 1024 * 10 + 10);
    // Flattened pooling of an 8x16x80 map gives 128 + 640 + 1280 = 2048 features.
    let mut b = ArchConfig::red03();
    b.variant = Variant::Custom;
    b.incres_channels[2] = vec![80];
    b.pooling = PoolingLayout::FlattenedMaps;
    let spec = build_network(&b).unwrap().spec().clone();
    let last = spec.layers.last().unwrap();
    assert_eq!(last.input, vec![2048]);
    assert_eq!(last.params, 20_490);
}

#[test]
fn embedding_classifier_count_and_outputs() {
    let mut net = embedding_classifier(2048, 10).unwrap();
    assert_eq!(count_parameters(net.spec()), 2048 * 1024 + 1024 + 1024 * 10 + 10);
    assert_eq!(count_parameters(net.spec()), 2_108_426);
    net.init_weights(3);
    let p = net.predict(&vec![0.0; 2048], 1).unwrap();
    // Zero embedding: hidden layer is relu(bias)=0, so output = softmax(out bias).
    for v in &p {
        assert!((v - 0.1).abs() < 1e-6);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x: Vec<f32> = (0..5 * 2048).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let p = net.predict(&x, 5).unwrap();
    assert_eq!(p.len(), 50);
    for row in p.chunks(10) {
        assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }
}

#[test]
fn flattened_pooling_dim() {
    assert_eq!(PoolingLayout::FlattenedMaps.feature_dim(8, 16, 512), 12_416);
    let mut a = ArchConfig::red01();
    a.pooling = PoolingLayout::FlattenedMaps;
    let spec = build_network(&a).unwrap().spec().clone();
    let head = spec.layers.iter().find(|l| l.name == "head.pooling").unwrap();
    assert_eq!(head.output, vec![12_416]);
    let fc = spec.layers.last().unwrap();
    assert_eq!(fc.input, vec![12_416]);
    assert_eq!(fc.params, 12_416 * 10 + 10);
}

#[test]
fn every_variant_maps_batch_to_ten_probabilities() {
    for v in [Variant::Red03, Variant::Red02] {
        let a = ArchConfig::from_variant(v).unwrap();
        let net = seeded(&a, 1);
        let p = net.predict(&random_input(2, 5), 2).unwrap();
        assert_eq!(p.len(), 20);
        for row in p.chunks(10) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }
    // Larger variants: one sample through the graph is enough to check the contract.
    for v in [Variant::Red01, Variant::Baseline] {
        let net = seeded(&ArchConfig::from_variant(v).unwrap(), 1);
        let p = net.predict(&random_input(1, 6), 1).unwrap();
        assert_eq!(p.len(), 10);
    }
}

#[test]
fn same_seed_same_weights() {
    let a = seeded(&ArchConfig::red03(), 11);
    let b = seeded(&ArchConfig::red03(), 11);
    let c = seeded(&ArchConfig::red03(), 12);
    let eq = |x: &Network, y: &Network| x.params().iter().zip(y.params().iter()).all(|(p, q)| p.value == q.value);
    assert!(eq(&a, &b));
    assert!(!eq(&a, &c));
}

#[test]
fn predict_is_pure_and_permutation_equivariant() {
    let net = seeded(&ArchConfig::red03(), 4);
    let per = 128 * 256 * 3;
    let x = random_input(3, 8);
    let p1 = net.predict(&x, 3).unwrap();
    let p2 = net.predict(&x, 3).unwrap();
    assert_eq!(p1, p2);
    let mut swapped = x[2 * per..].to_vec();
    swapped.extend_from_slice(&x[per..2 * per]);
    swapped.extend_from_slice(&x[..per]);
    let ps = net.predict(&swapped, 3).unwrap();
    for i in 0..3 {
        let a = &p1[i * 10..(i + 1) * 10];
        let b = &ps[(2 - i) * 10..(3 - i) * 10];
        for (u, v) in a.iter().zip(b) {
            assert!((u - v).abs() < 1e-6);
        }
    }
    let mut rep = x[..per].to_vec();
    rep.extend_from_slice(&x[..per]);
    let pr = net.predict(&rep, 2).unwrap();
    assert_eq!(pr[..10], pr[10..]);
}

#[test]
fn predict_errors() {
    let net = build_network(&ArchConfig::red03()).unwrap();
    assert!(matches!(net.predict(&random_input(1, 1), 1), Err(ModelError::WeightsNotLoaded)));
    let net = seeded(&ArchConfig::red03(), 1);
    assert!(matches!(net.predict(&[0.0; 10], 1), Err(ModelError::ShapeMismatch(_))));
}

#[test]
fn gradient_reaches_every_parameter() {
    let mut net = seeded(&ArchConfig::red03(), 21);
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![2, 128, 256, 3], random_input(2, 22)).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (y, updates) = net.forward(&mut g, x, Mode::Train, &mut rng).unwrap();
    assert!(!updates.is_empty());
    let target = Tensor::from_fn(&[2, 10], |i| if i == 3 || i == 17 { 1.0 } else { 0.0 });
    let loss = g.kl_div(target, y).unwrap();
    net.params_mut().zero_grad();
    g.backward(loss, net.params_mut()).unwrap();
    for p in net.params().iter() {
        assert!(p.grad.data().iter().any(|&v| v != 0.0), "{} has an all-zero gradient", p.name);
        assert!(p.grad.all_finite());
    }
}

#[test]
fn weights_round_trip() {
    let net = seeded(&ArchConfig::red03(), 31);
    let mut buf = Vec::new();
    net.save_weights(&mut buf).unwrap();
    let mut other = build_network(&ArchConfig::red03()).unwrap();
    other.load_weights(&buf[..]).unwrap();
    let x = random_input(1, 3);
    assert_eq!(net.predict(&x, 1).unwrap(), other.predict(&x, 1).unwrap());
    let mut wrong = build_network(&ArchConfig::red02()).unwrap();
    assert!(wrong.load_weights(&buf[..]).is_err());
}

/// Untrained seeded Red03 on a fixed input, frozen from the first run.
#[test]
fn red03_golden_probabilities() {
    const GOLDEN: [f32; 10] = [
        0.0017381505,
        8.650585e-7,
        3.243451e-8,
        0.0038279411,
        0.99240583,
        0.0009706397,
        0.00036000513,
        0.0006947826,
        1.7625814e-6,
        3.3583134e-9,
    ];
    let net = seeded(&ArchConfig::red03(), 2024);
    let x: Vec<f32> = (0..128 * 256 * 3).map(|i| ((i as f32) * 0.013).sin()).collect();
    let p = net.predict(&x, 1).unwrap();
    for (a, b) in p.iter().zip(GOLDEN) {
        assert!((a - b).abs() <= 1e-4 * b.max(1e-3), "{a} vs {b}");
    }
}
