use hotsearch_core::bottleneck::{analyze_network, detect, BottleneckLabel};
use hotsearch_core::perfmodel::{layer_latency, LayerEffects, LayerWork, Workload};
use hotsearch_core::{AcceleratorDesign, DataWidths, FpgaSpec, LayerShape};

fn layer(i: usize, k: u64, widths: (u32, u32, u32)) -> LayerWork {
    LayerWork {
        op_index: i,
        name: format!("l{i}"),
        shape: Some(LayerShape::conv(8, 8, 4, 4, k)),
        widths: DataWidths {
            bit_i: widths.0,
            bit_w: widths.1,
            bit_o: widths.2,
        },
        effects: LayerEffects::default(),
        fixed_cycles: 0,
    }
}

/// Small 2x2 tiles with 64-bit ports: t_i = bit_i / 2, t_o = bit_o / 2,
/// t_w = K^2 * bit_w, t_comp = 4 K^2.
#[test]
fn one_layer_per_label() {
    let fpga = FpgaSpec::default();
    let design = AcceleratorDesign::with_lanes(8, 8, 2, 2, 0, (4, 4, 24), 16);
    let design = AcceleratorDesign { wb_bits: 64, ..design };
    let wl = Workload {
        layers: vec![
            layer(0, 3, (16, 2, 16)),  // t_comp 36 > t_w 18 > t_i 8
            layer(1, 1, (32, 2, 16)),  // t_i 16 > t_comp 4
            layer(2, 3, (16, 16, 16)), // t_w 144 > t_comp 36
            layer(3, 1, (16, 2, 32)),  // t_o 16 > one trip of lat1 8
        ],
    };
    let a = analyze_network(&fpga, &design, &wl).unwrap();
    let labels: Vec<BottleneckLabel> = a.layers.iter().map(|l| l.bottleneck.label).collect();
    use BottleneckLabel::*;
    assert_eq!(labels, vec![C, I, W, O]);
    assert_eq!(a.histogram.as_tuple(), (1, 1, 1, 1));
    assert_eq!(a.histogram.total(), 4);

    let b = &a.layers[2].breakdown;
    assert_eq!((b.t_comp, b.t_i, b.t_w, b.t_o), (36, 8, 144, 8));
    assert!(a.layers[2].verdict.quant_helps);
    assert!(a.layers[0].verdict.pattern_helps);
    assert!(!a.layers[1].verdict.pattern_helps);
}

#[test]
fn ties_follow_fixed_order() {
    let fpga = FpgaSpec::default();
    // t_comp = 4, t_i = 4 * 4 * 16 / 64 = 4, t_w = 4 * 4 * 16 / 64 = 4.
    let design = AcceleratorDesign {
        tm: 4,
        tn: 4,
        tr: 2,
        tc: 2,
        tm_d: 0,
        ib_bits: 64,
        ob_bits: 64,
        wb_bits: 64,
    };
    let shape = LayerShape::conv(4, 4, 2, 2, 1);
    let b = layer_latency(
        &fpga,
        &shape,
        &design,
        &DataWidths::uniform(16),
        &LayerEffects::default(),
    )
    .unwrap();
    assert_eq!((b.t_comp, b.t_i, b.t_w), (4, 4, 4));
    let d = detect(&b);
    assert_eq!(d.label, BottleneckLabel::C);
    assert_eq!(d.slack, 0);
    assert!(d.near_tie(0.0));
}
