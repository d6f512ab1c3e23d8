use hotsearch_core::compress::{
    apply_pattern, assign_patterns, cut_channels, enumerate_patterns, expand_filter, kept_energy_fraction, naive_conv,
    naive_conv_fixed, select_library, ChannelRanking, PatternLibrary,
};
use hotsearch_core::netzoo::{builtin_network, BuiltinNet};
use hotsearch_core::OperatorSpec;
use ndarray::{Array3, Array4};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_weights(rng: &mut ChaCha8Rng, m: usize, n: usize, k: usize) -> Array4<f32> {
    Array4::from_shape_fn((m, n, k, k), |_| rng.gen_range(-1.0f32..=1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expansion_keeps_outputs(
        seed in any::<u64>(),
        k in prop::sample::select(vec![1usize, 3, 5]),
        exp in prop::sample::select(vec![2usize, 4]),
        stride in 1usize..=2,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
        let padding = rng.gen_range(0..=k / 2);
        let op = OperatorSpec::conv("a", "b", k, stride, padding, random_weights(&mut rng, m, n, k));
        let wide = expand_filter(&op, exp).unwrap();
        prop_assert_eq!(wide.k, k + exp);
        let side = rng.gen_range(k.max(4)..=8);
        let xi = Array3::from_shape_fn((n, side, side), |_| rng.gen_range(-100i64..=100));
        prop_assert_eq!(naive_conv_fixed(&xi, &op, 10).unwrap(), naive_conv_fixed(&xi, &wide, 10).unwrap());
        let xf = xi.mapv(|v| v as f64 / 7.0);
        let (a, b) = (naive_conv(&xf, &op).unwrap(), naive_conv(&xf, &wide).unwrap());
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-6);
    }

    #[test]
    fn pattern_keeps_exactly_the_mask(seed in any::<u64>(), pat_c in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_weights(&mut rng, 4, 3, 3);
        let lib = select_library(&w, 3, pat_c, 4).unwrap();
        let assignment = assign_patterns(&w, &lib).unwrap();
        let pruned = apply_pattern(&w, &lib, &assignment).unwrap();
        let zeros = pruned.iter().filter(|v| **v == 0.0).count();
        prop_assert!(zeros >= 4 * 3 * pat_c);
        let kept = kept_energy_fraction(&w, &pruned);
        prop_assert!(kept > 0.0 && kept < 1.0);
    }
}

/// Greedy selection against the best library over every subset.
#[test]
fn greedy_library_close_to_exhaustive() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let all = enumerate_patterns(3, 2).unwrap();
    for _ in 0..5 {
        let w = random_weights(&mut rng, 3, 2, 3);
        let energy = |lib: &PatternLibrary| {
            let a = assign_patterns(&w, lib).unwrap();
            kept_energy_fraction(&w, &apply_pattern(&w, lib, &a).unwrap())
        };
        let greedy = energy(&select_library(&w, 3, 2, 2).unwrap());
        let mut best: f64 = 0.0;
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                let lib = PatternLibrary::new(3, 2, vec![all[i].clone(), all[j].clone()]).unwrap();
                best = best.max(energy(&lib));
            }
        }
        assert!(greedy <= best + 1e-12);
        assert!(greedy >= 0.95 * best, "greedy {greedy} vs best {best}");
    }
}

#[test]
fn cut_then_run_matches_shapes() {
    let net = builtin_network(BuiltinNet::TinyNet).unwrap();
    let cut = cut_channels(&net, "conv1", 1, ChannelRanking::L1).unwrap();
    assert_eq!(cut.node("conv1").unwrap().channels, 3);
    assert_eq!(cut.ops()[1].weights.as_ref().unwrap().dim(), (4, 3, 3, 3));
    let random = cut_channels(&net, "conv1", 2, ChannelRanking::Random(4)).unwrap();
    assert_eq!(random.node("conv1").unwrap().channels, 2);
}
