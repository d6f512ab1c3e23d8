use criterion::{black_box, criterion_group, criterion_main, Criterion};
use hotsearch_core::netzoo::{builtin_network, BuiltinNet};
use hotsearch_core::perfmodel::{
    layer_latency, network_latency, optimize_design, simulate_layer, LayerEffects, Workload,
};
use hotsearch_core::{AcceleratorDesign, DataWidths, FpgaSpec, LayerShape};

fn latency(c: &mut Criterion) {
    let fpga = FpgaSpec::default();
    let design = AcceleratorDesign::with_lanes(64, 32, 13, 13, 0, (16, 8, 8), 16);
    let shape = LayerShape::conv(256, 384, 13, 13, 3);
    let widths = DataWidths::default();
    let effects = LayerEffects::default();
    c.bench_function("layer_latency", |b| {
        b.iter(|| layer_latency(&fpga, black_box(&shape), &design, &widths, &effects))
    });

    let net = builtin_network(BuiltinNet::AlexNetConv).unwrap();
    let workload = Workload::baseline(&net);
    c.bench_function("network_latency_alexnet", |b| {
        b.iter(|| network_latency(&fpga, black_box(&design), &workload))
    });

    let small = LayerShape::conv(16, 16, 12, 12, 3);
    let sim_design = AcceleratorDesign::with_lanes(4, 4, 6, 6, 0, (4, 4, 4), 16);
    c.bench_function("simulate_layer_small", |b| {
        b.iter(|| simulate_layer(&fpga, black_box(&small), &sim_design, &widths, &effects))
    });
}

fn optimizer(c: &mut Criterion) {
    let fpga = FpgaSpec::default();
    let tiny = Workload::baseline(&builtin_network(BuiltinNet::TinyNet).unwrap());
    c.bench_function("optimize_design_tiny", |b| {
        b.iter(|| optimize_design(&fpga, black_box(&tiny)))
    });
    let mut group = c.benchmark_group("slow");
    group.sample_size(10);
    let alex = Workload::baseline(&builtin_network(BuiltinNet::AlexNetConv).unwrap());
    group.bench_function("optimize_design_alexnet", |b| {
        b.iter(|| optimize_design(&fpga, black_box(&alex)))
    });
    group.finish();
}

criterion_group!(benches, latency, optimizer);
criterion_main!(benches);
