use hotsearch_core::evalbridge::{EvalRequest, Evaluator, SurrogateEvaluator};
use hotsearch_core::netzoo::{builtin_network, BuiltinNet};
use hotsearch_core::search::{
    fine_tune_proxy, run_search, Backbone, ControllerParams, ControllerState, ParetoPoint, ParetoSet, SearchConfig,
};
use hotsearch_core::searchspace::{PatternChoice, SpaceCaps};
use hotsearch_core::FpgaSpec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny_backbone(caps: &SpaceCaps) -> (FpgaSpec, Backbone) {
    let fpga = FpgaSpec::default();
    let net = builtin_network(BuiltinNet::TinyNet).unwrap();
    let bb = Backbone::prepare(&net, &fpga, caps).unwrap();
    (fpga, bb)
}

/// Pearson statistic against a uniform expectation.
fn chi_square(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

#[test]
fn uniform_controller_draws_pass_chi_square() {
    let c = ControllerState::new(&[5], ControllerParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut counts = [0u64; 5];
    for _ in 0..100_000 {
        counts[c.sample_actions(&mut rng).0[0]] += 1;
    }
    // 0.999 quantile of chi-square with 4 degrees of freedom.
    assert!(chi_square(&counts) < 18.47, "{counts:?}");
}

#[test]
fn uniform_space_sampling_passes_chi_square() {
    let caps = SpaceCaps {
        pattern_categories: 2,
        tilings: 2,
        lane_splits: 4,
        ..SpaceCaps::default()
    };
    let (_, bb) = tiny_backbone(&caps);
    let card = bb.space.cardinality as usize;
    assert_eq!(card, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = vec![0u64; card];
    for _ in 0..100_000 {
        let c = bb.space.sample_uniform(&mut rng);
        counts[bb.space.choices_to_index(&c).unwrap() as usize] += 1;
    }
    // 0.999 quantile of chi-square with 199 degrees of freedom.
    assert!(chi_square(&counts) < 267.0);
}

#[test]
#[allow(clippy::needless_range_loop)]
fn log_softmax_gradient_matches_finite_differences() {
    let mut c = ControllerState::new(&[4, 3], ControllerParams::default()).unwrap();
    c.logits = vec![vec![0.2, -0.7, 1.3, 0.0], vec![-0.4, 0.9, 0.1]];
    let actions = [2, 0];
    let grad = c.grad_log_prob(&actions);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for s in 0..2 {
        for j in 0..c.logits[s].len() {
            let mut up = c.clone();
            up.logits[s][j] += h;
            let mut down = c.clone();
            down.logits[s][j] -= h;
            let fd = (up.log_prob(&actions) - down.log_prob(&actions)) / (2.0 * h);
            worst = worst.max((fd - grad[s][j]).abs() / grad[s][j].abs().max(1e-3));
        }
    }
    assert!(worst < 1e-4, "relative error {worst}");
}

#[test]
fn surrogate_accuracy_falls_with_pruning() {
    let (_, bb) = tiny_backbone(&SpaceCaps::default());
    let eval = SurrogateEvaluator::new(vec![bb.net.clone()]);
    let mut cfg = bb.space.index_to_config(0).unwrap();
    assert_eq!(fine_tune_proxy(&cfg, &eval, 10).unwrap(), bb.net.baseline_accuracy());
    let mut prev = bb.net.baseline_accuracy();
    for pat_c in 1..=4 {
        cfg.layers[1].pattern = Some(PatternChoice { pat_c, pat_n: 4 });
        let acc = fine_tune_proxy(&cfg, &eval, 10).unwrap();
        assert!(acc < prev);
        prev = acc;
    }
    assert!(eval.evaluate(&EvalRequest::new(&cfg, 3)).unwrap().validate().is_ok());
}

#[test]
fn pareto_points_meet_constraint_and_do_not_dominate() {
    let (fpga, bb) = tiny_backbone(&SpaceCaps::default());
    let eval = SurrogateEvaluator::new(vec![bb.net.clone()]);
    let cfg = SearchConfig {
        t_constraint_ms: Some(bb.baseline_ms * 0.9),
        episodes_max: 300,
        seed: 12,
        ..SearchConfig::default()
    };
    let out = run_search(std::slice::from_ref(&bb), &fpga, &cfg, &eval).unwrap();
    assert!(!out.pareto.is_empty());
    assert!(out.pareto.is_non_dominated());
    for p in out.pareto.points() {
        let lat = bb.latency_ms(&fpga, &p.config).unwrap().unwrap();
        assert_eq!(lat, p.latency_ms);
        assert!(lat <= cfg.t_constraint_ms.unwrap());
    }
    for e in &out.trace {
        assert_eq!(
            e.accuracy.is_none(),
            e.latency_ms > cfg.t_constraint_ms.unwrap() || e.failed
        );
    }
}

fn shared() -> &'static Backbone {
    static BB: std::sync::OnceLock<Backbone> = std::sync::OnceLock::new();
    BB.get_or_init(|| tiny_backbone(&SpaceCaps::default()).1)
}

proptest! {
    #[test]
    fn index_round_trips(seed in any::<u64>()) {
        let bb = shared();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let choices = bb.space.sample_uniform(&mut rng);
        let index = bb.space.choices_to_index(&choices).unwrap();
        prop_assert_eq!(bb.space.index_to_choices(index).unwrap(), choices);
    }

    #[test]
    fn pareto_insertions_keep_invariant(points in prop::collection::vec((1u32..50, 0u32..50), 1..60)) {
        let config = shared().space.index_to_config(0).unwrap();
        let mut set = ParetoSet::new();
        for &(l, a) in &points {
            set.insert(ParetoPoint { config: config.clone(), latency_ms: l as f64, accuracy: a as f64 / 50.0 });
        }
        prop_assert!(set.is_non_dominated());
        for &(l, a) in &points {
            let q = ParetoPoint { config: config.clone(), latency_ms: l as f64, accuracy: a as f64 / 50.0 };
            let covered = set.points().iter().any(|p| p.dominates(&q) || (p.latency_ms == q.latency_ms && p.accuracy == q.accuracy));
            prop_assert!(covered);
        }
    }
}
