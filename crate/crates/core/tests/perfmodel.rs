use hotsearch_core::netzoo::{builtin_network, BuiltinNet};
use hotsearch_core::perfmodel::{
    lane_splits, layer_latency, network_latency, optimize_design, simulate_layer, tile_candidates, LayerEffects,
    Workload,
};
use hotsearch_core::{AcceleratorDesign, DataWidths, FpgaSpec, LayerShape};
use proptest::prelude::*;

fn small_fpga() -> FpgaSpec {
    FpgaSpec {
        dsp_total: 16,
        bram_blocks: 4096,
        bram_bits_per_block: 18 * 1024,
        bw_total_bits_per_cycle: 8 * 16,
        clock_hz: 100_000_000,
        compute_word_bits: 16,
    }
}

/// Every (tm, tn, tr, tc, lanes) point under the budget, scored directly.
fn brute_force(fpga: &FpgaSpec, wl: &Workload) -> u64 {
    let max_r = wl.compute_layers().map(|(_, s)| s.r).max().unwrap();
    let max_c = wl.compute_layers().map(|(_, s)| s.c).max().unwrap();
    let mut best = u64::MAX;
    for tm in 1..=fpga.dsp_total {
        for tn in 1..=fpga.dsp_total / tm {
            for &tr in &tile_candidates(max_r) {
                for &tc in &tile_candidates(max_c) {
                    for split in lane_splits(fpga.lanes()) {
                        let d = AcceleratorDesign::with_lanes(tm, tn, tr, tc, 0, split, fpga.compute_word_bits);
                        if let Ok(l) = network_latency(fpga, &d, wl) {
                            best = best.min(l.total_cycles);
                        }
                    }
                }
            }
        }
    }
    best
}

#[test]
fn optimizer_matches_brute_force_on_small_budget() {
    let fpga = small_fpga();
    for net in [
        builtin_network(BuiltinNet::TinyNet).unwrap(),
        builtin_network(BuiltinNet::RandomNet { seed: 5, depth: 3 }).unwrap(),
        builtin_network(BuiltinNet::RandomNet { seed: 11, depth: 4 }).unwrap(),
    ] {
        let wl = Workload::baseline(&net);
        if wl.has_depthwise() {
            continue;
        }
        let (design, cycles) = optimize_design(&fpga, &wl).unwrap();
        assert_eq!(network_latency(&fpga, &design, &wl).unwrap().total_cycles, cycles);
        assert_eq!(cycles, brute_force(&fpga, &wl), "{}", net.name());
    }
}

#[test]
fn optimized_design_fits_budgets() {
    let fpga = FpgaSpec::default();
    let net = builtin_network(BuiltinNet::AlexNetConv).unwrap();
    let wl = Workload::baseline(&net);
    let (d, _) = optimize_design(&fpga, &wl).unwrap();
    assert!(d.dsp_used() <= fpga.dsp_total);
    assert_eq!(d.ib_bits + d.ob_bits + d.wb_bits, fpga.bw_total_bits_per_cycle);
    assert!(network_latency(&fpga, &d, &wl).unwrap().buffer_blocks <= fpga.bram_blocks);
}

fn shape_strategy() -> impl Strategy<Value = (LayerShape, AcceleratorDesign)> {
    (
        1u64..=32,
        1u64..=32,
        1u64..=14,
        1u64..=14,
        prop::sample::select(vec![1u64, 3, 5]),
        1u64..=16,
        1u64..=16,
        1u64..=14,
        1u64..=14,
        (1u64..=10, 1u64..=10, 1u64..=10),
    )
        .prop_map(|(m, n, r, c, k, tm, tn, tr, tc, lanes)| {
            (
                LayerShape::conv(m, n, r, c, k),
                AcceleratorDesign::with_lanes(tm, tn, tr, tc, 0, lanes, 16),
            )
        })
}

proptest! {
    #[test]
    fn more_lanes_never_slower((shape, d) in shape_strategy(), which in 0usize..3) {
        let fpga = FpgaSpec::default();
        let w = DataWidths::uniform(16);
        let e = LayerEffects::default();
        let mut lanes = d.lanes(16);
        let before = layer_latency(&fpga, &shape, &d, &w, &e).unwrap().lat_total;
        match which { 0 => lanes.0 += 1, 1 => lanes.1 += 1, _ => lanes.2 += 1 }
        let wider = AcceleratorDesign::with_lanes(d.tm, d.tn, d.tr, d.tc, 0, lanes, 16);
        prop_assert!(layer_latency(&fpga, &shape, &wider, &w, &e).unwrap().lat_total <= before);
    }

    #[test]
    fn cuts_within_a_tile_step_change_nothing((shape, d) in shape_strategy()) {
        let fpga = FpgaSpec::default();
        let w = DataWidths::uniform(16);
        let base = layer_latency(&fpga, &shape, &d, &w, &LayerEffects::default()).unwrap();
        // Largest cut keeping ceil(M / tm) and ceil(N / tn) unchanged.
        let slack_m = shape.m - (shape.m.div_ceil(d.tm) - 1) * d.tm - 1;
        let slack_n = shape.n - (shape.n.div_ceil(d.tn) - 1) * d.tn - 1;
        let e = LayerEffects { cut_out: slack_m, cut_in: slack_n, ..Default::default() };
        prop_assert_eq!(layer_latency(&fpga, &shape, &d, &w, &e).unwrap().lat_total, base.lat_total);
        if shape.m > slack_m + 1 {
            let e = LayerEffects { cut_out: slack_m + 1, ..Default::default() };
            prop_assert!(layer_latency(&fpga, &shape, &d, &w, &e).unwrap().lat_total < base.lat_total);
        }
    }

    #[test]
    fn simulator_stays_within_one_stage((shape, d) in shape_strategy()) {
        let fpga = FpgaSpec::default();
        let w = DataWidths::uniform(16);
        let e = LayerEffects::default();
        let b = layer_latency(&fpga, &shape, &d, &w, &e).unwrap();
        let sim = simulate_layer(&fpga, &shape, &d, &w, &e).unwrap();
        let lat1 = b.t_comp.max(b.t_i).max(b.t_w);
        prop_assert!(b.lat_total.abs_diff(sim) <= lat1.max(b.t_o));
    }

    #[test]
    fn pattern_zeros_scale_compute_exactly((shape, d) in shape_strategy(), zeros in 0u64..8) {
        let fpga = FpgaSpec::default();
        let w = DataWidths::uniform(16);
        prop_assume!(zeros < shape.k * shape.k);
        let e = LayerEffects { pattern_zeros: zeros, ..Default::default() };
        let b = layer_latency(&fpga, &shape, &d, &w, &e).unwrap();
        prop_assert_eq!(b.t_comp, (shape.k * shape.k - zeros) * d.tr * d.tc);
    }
}
