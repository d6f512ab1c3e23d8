use std::path::Path;

use hotsearch_core::compress::run_network;
use hotsearch_core::netzoo::{builtin_network, parse_manifest, reorder_input_channels, write_manifest, BuiltinNet};
use hotsearch_core::{ModelZoo, OpKind};
use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn data(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

#[test]
fn shipped_zoo_matches_builtin_shapes() {
    let zoo = parse_manifest(data("zoo.json")).unwrap();
    let alex = zoo.get("alexnet").unwrap();
    let builtin = builtin_network(BuiltinNet::AlexNetConv).unwrap();
    assert_eq!(alex.nodes(), builtin.nodes());
    assert_eq!(alex.count_ops(OpKind::Conv), 5);
    assert_eq!(alex.count_ops(OpKind::Pool), 2);
    // 64*3*121 + 192*64*25 + 384*192*9 + 256*384*9 + 256*256*9, then biases.
    assert_eq!(alex.conv_weight_count(), 2_468_544);
    assert_eq!(alex.conv_parameter_count(), 2_469_696);
    assert_eq!(zoo.get("tinynet").unwrap().conv_weight_count(), 4 * 3 * 9 + 4 * 4 * 9);
}

#[test]
fn manifest_round_trip_preserves_weights() {
    let dir = tempfile::tempdir().unwrap();
    let zoo = ModelZoo::new(vec![
        builtin_network(BuiltinNet::TinyNet).unwrap(),
        builtin_network(BuiltinNet::RandomNet { seed: 3, depth: 4 }).unwrap(),
    ])
    .unwrap();
    let path = write_manifest(&zoo, dir.path()).unwrap();
    let back = parse_manifest(path).unwrap();
    assert_eq!(back.len(), 2);
    for m in zoo.models() {
        let b = back.get(m.name()).unwrap();
        assert_eq!(b.nodes(), m.nodes());
        assert_eq!(b.weight_checksum(), m.weight_checksum());
        assert_eq!(b.baseline_accuracy(), m.baseline_accuracy());
    }
}

#[test]
fn seeded_weights_are_reproducible() {
    let a = parse_manifest(data("zoo.json")).unwrap();
    let b = parse_manifest(data("zoo.json")).unwrap();
    for (x, y) in a.models().iter().zip(b.models()) {
        assert_eq!(x.weight_checksum(), y.weight_checksum());
    }
}

#[test]
fn channel_reorder_preserves_outputs() {
    let net = builtin_network(BuiltinNet::TinyNet).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let input = net.inputs()[0].clone();
    for trial in 0..20 {
        let mut perm: Vec<usize> = (0..4).collect();
        perm.shuffle(&mut rng);
        let reordered = reorder_input_channels(&net, 1, &perm).unwrap();
        let xf = Array3::from_shape_fn((input.channels, input.rows, input.cols), |_| rng.gen_range(-1.0..=1.0));
        let a = run_network::<f64>(&net, std::slice::from_ref(&xf), 0).unwrap();
        let b = run_network::<f64>(&reordered, &[xf], 0).unwrap();
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "trial {trial}: float drift {err}");

        let xi = Array3::from_shape_fn((input.channels, input.rows, input.cols), |_| rng.gen_range(-64i64..=64));
        assert_eq!(
            run_network::<i64>(&net, std::slice::from_ref(&xi), 6).unwrap(),
            run_network::<i64>(&reordered, &[xi], 6).unwrap(),
            "trial {trial}"
        );
    }
}
