use anyhow::Result;
use clap::ValueEnum;
use hotsearch_core::compress::{expand_filter, naive_conv, naive_conv_fixed};
use hotsearch_core::evalbridge::SurrogateEvaluator;
use hotsearch_core::netzoo::{builtin_network, BuiltinNet};
use hotsearch_core::perfmodel::{layer_latency, simulate_layer, LayerEffects};
use hotsearch_core::search::{exhaustive_search, run_search, Backbone, SearchConfig, EXHAUSTIVE_CAP};
use hotsearch_core::searchspace::SpaceCaps;
use hotsearch_core::{AcceleratorDesign, DataWidths, FpgaSpec, LatencyBreakdown, LayerShape, OperatorSpec};
use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mutation {
    /// One extra cycle on every layer's latency tail.
    LatTail,
}

type LatencyFn = fn(
    &FpgaSpec,
    &LayerShape,
    &AcceleratorDesign,
    &DataWidths,
    &LayerEffects,
) -> hotsearch_core::Result<LatencyBreakdown>;

fn tail_off_by_one(
    fpga: &FpgaSpec,
    shape: &LayerShape,
    design: &AcceleratorDesign,
    widths: &DataWidths,
    effects: &LayerEffects,
) -> hotsearch_core::Result<LatencyBreakdown> {
    let mut b = layer_latency(fpga, shape, design, widths, effects)?;
    b.lat_total += 1;
    Ok(b)
}

struct Suite {
    name: &'static str,
    passed: usize,
    total: usize,
    /// Fraction of cases that must pass.
    quorum: f64,
}

impl Suite {
    fn ok(&self) -> bool {
        self.passed as f64 >= self.quorum * self.total as f64
    }
}

/// Worked by hand from the tiling equations.
fn frozen(lat: LatencyFn) -> Suite {
    let fpga = FpgaSpec::default();
    let w16 = DataWidths::uniform(16);
    let none = LayerEffects::default();
    let cases = [
        (
            LayerShape::conv(4, 3, 8, 8, 3),
            AcceleratorDesign::with_lanes(4, 4, 8, 8, 0, (1, 29, 2), 16),
            none,
            (576, 256, 72, 9, 1161),
        ),
        (
            LayerShape::conv(4, 3, 8, 8, 3),
            AcceleratorDesign::with_lanes(4, 4, 8, 8, 0, (1, 29, 2), 16),
            LayerEffects {
                pattern_zeros: 4,
                ..none
            },
            (320, 256, 72, 9, 649),
        ),
        (
            LayerShape::conv(8, 16, 4, 4, 1),
            AcceleratorDesign::with_lanes(8, 8, 4, 4, 0, (2, 2, 28), 16),
            none,
            (16, 64, 3, 64, 256),
        ),
        (
            LayerShape::depthwise(8, 4, 4, 3),
            AcceleratorDesign::with_lanes(8, 8, 4, 4, 4, (2, 2, 28), 16),
            none,
            (144, 8, 2, 32, 464),
        ),
    ];
    let passed = cases
        .iter()
        .filter(|(shape, design, effects, want)| {
            lat(&fpga, shape, design, &w16, effects)
                .map(|b| (b.t_comp, b.t_i, b.t_w, b.t_o, b.lat_total) == *want)
                .unwrap_or(false)
        })
        .count();
    Suite {
        name: "frozen latency values",
        passed,
        total: cases.len(),
        quorum: 1.0,
    }
}

pub(crate) fn random_layer(rng: &mut ChaCha8Rng) -> (LayerShape, AcceleratorDesign) {
    let k = [1, 3, 5][rng.gen_range(0..3)];
    let (r, c) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
    let lanes = (rng.gen_range(1..=8), rng.gen_range(1..=8), rng.gen_range(1..=8));
    let (tm, tn, tm_d) = (rng.gen_range(1..=16), rng.gen_range(1..=16), rng.gen_range(1..=16));
    let design = AcceleratorDesign::with_lanes(tm, tn, rng.gen_range(1..=12), rng.gen_range(1..=12), tm_d, lanes, 16);
    let shape = if rng.gen_bool(0.2) {
        LayerShape::depthwise(rng.gen_range(1..=16), r, c, k)
    } else {
        LayerShape::conv(rng.gen_range(1..=16), rng.gen_range(1..=16), r, c, k)
    };
    (shape, design)
}

fn simulator(lat: LatencyFn) -> Suite {
    let fpga = FpgaSpec::default();
    let w16 = DataWidths::uniform(16);
    let mut rng = ChaCha8Rng::seed_from_u64(0x51);
    let total = 100;
    let mut passed = 0;
    for _ in 0..total {
        let (shape, design) = random_layer(&mut rng);
        let effects = LayerEffects::default();
        let (Ok(b), Ok(sim)) = (
            lat(&fpga, &shape, &design, &w16, &effects),
            simulate_layer(&fpga, &shape, &design, &w16, &effects),
        ) else {
            continue;
        };
        let lat1 = b.t_comp.max(b.t_i).max(b.t_w);
        if b.lat_total.abs_diff(sim) <= lat1.max(b.t_o) {
            passed += 1;
        }
    }
    Suite {
        name: "analytical vs simulator",
        passed,
        total,
        quorum: 1.0,
    }
}

fn expansion() -> Suite {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e);
    let total = 50;
    let mut passed = 0;
    for _ in 0..total {
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let (n, m) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let stride = rng.gen_range(1..=2);
        let padding = rng.gen_range(0..=k / 2);
        let side = rng.gen_range(k.max(5)..=9);
        let w = Array4::from_shape_fn((m, n, k, k), |_| rng.gen_range(-1.0f32..=1.0));
        let op = OperatorSpec::conv("a", "b", k, stride, padding, w);
        let exp = [2, 4][rng.gen_range(0..2)];
        let Ok(wide) = expand_filter(&op, exp) else {
            continue;
        };
        let xf = Array3::from_shape_fn((n, side, side), |_| rng.gen_range(-4.0f64..=4.0));
        let xi = Array3::from_shape_fn((n, side, side), |_| rng.gen_range(-128i64..=128));
        let float_ok = match (naive_conv(&xf, &op), naive_conv(&xf, &wide)) {
            (Ok(a), Ok(b)) => a.dim() == b.dim() && a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-6),
            _ => false,
        };
        let fixed_ok = matches!(
            (naive_conv_fixed(&xi, &op, 8), naive_conv_fixed(&xi, &wide, 8)),
            (Ok(a), Ok(b)) if a == b
        );
        if float_ok && fixed_ok {
            passed += 1;
        }
    }
    Suite {
        name: "filter expansion equivalence",
        passed,
        total,
        quorum: 1.0,
    }
}

fn reinforce() -> Result<Suite> {
    let fpga = FpgaSpec::default();
    let net = builtin_network(BuiltinNet::TinyNet)?;
    let caps = SpaceCaps {
        pattern_categories: 2,
        tilings: 2,
        lane_splits: 4,
        ..SpaceCaps::default()
    };
    let bb = Backbone::prepare(&net, &fpga, &caps)?;
    let eval = SurrogateEvaluator::new(vec![net.clone()]);
    let mut passed = 0;
    let mut total = 0;
    for factor in [1.0, 0.9] {
        let base = SearchConfig {
            t_constraint_ms: Some(bb.baseline_ms * factor),
            episodes_max: 50 * bb.space.cardinality as usize,
            ..SearchConfig::default()
        };
        let spec = base.reward_spec(net.baseline_accuracy())?;
        let opt = exhaustive_search(&bb, &fpga, &spec, &eval, base.beta, EXHAUSTIVE_CAP)?;
        for seed in 0..5 {
            let cfg = SearchConfig { seed, ..base.clone() };
            let out = run_search(std::slice::from_ref(&bb), &fpga, &cfg, &eval)?;
            total += 1;
            if opt.reward - out.backbones[0].best_reward <= 0.05 * opt.reward.abs() {
                passed += 1;
            }
        }
    }
    Ok(Suite {
        name: "policy gradient vs exhaustive",
        passed,
        total,
        quorum: 0.95,
    })
}

pub fn run(mutation: Option<Mutation>) -> Result<u8> {
    let lat: LatencyFn = match mutation {
        Some(Mutation::LatTail) => tail_off_by_one,
        None => layer_latency,
    };
    let suites = [frozen(lat), simulator(lat), expansion(), reinforce()?];
    for s in &suites {
        println!(
            "{:<32} {:>4}/{:<4} {}",
            s.name,
            s.passed,
            s.total,
            if s.ok() { "PASS" } else { "FAIL" }
        );
    }
    Ok(if suites.iter().all(Suite::ok) { 0 } else { 3 })
}
