//! Per-layer bottleneck labels and which compression techniques can pay off.
//!
//! A layer is `O`-bound when the OFM write-back strictly dominates the
//! per-output-tile time; otherwise its label is the largest of compute,
//! IFM load and weight load, with ties resolved in that order. Every
//! projected saving is recomputed through [`perfmodel::layer_latency`].

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::perfmodel::{
    buffer_blocks, layer_latency, network_latency, AcceleratorDesign, ConvKind, DataWidths, FpgaSpec, LatencyBreakdown,
    LayerEffects, LayerShape, Workload,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BottleneckLabel {
    C,
    I,
    W,
    O,
}

impl BottleneckLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            BottleneckLabel::C => "C",
            BottleneckLabel::I => "I",
            BottleneckLabel::W => "W",
            BottleneckLabel::O => "O",
        }
    }
}

impl std::fmt::Display for BottleneckLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bottleneck {
    pub label: BottleneckLabel,
    pub dominant_cycles: u64,
    /// Dominant term minus the runner-up within the same max.
    pub slack: u64,
    pub runner_up: BottleneckLabel,
}

impl Bottleneck {
    /// Whether the runner-up is within `fraction` of the dominant term.
    pub fn near_tie(&self, fraction: f64) -> bool {
        (self.slack as f64) <= fraction * self.dominant_cycles as f64
    }
}

/// The largest and second-largest `Lat1` terms, ties in C, I, W order.
fn lat1_ranking(bd: &LatencyBreakdown) -> [(BottleneckLabel, u64); 3] {
    let mut terms = [
        (BottleneckLabel::C, bd.t_comp),
        (BottleneckLabel::I, bd.t_i),
        (BottleneckLabel::W, bd.t_w),
    ];
    // Stable sort keeps C, I, W order among equal values.
    terms.sort_by_key(|t| std::cmp::Reverse(t.1));
    terms
}

pub fn detect(bd: &LatencyBreakdown) -> Bottleneck {
    let ranked = lat1_ranking(bd);
    let inner = bd.input_trips * bd.lat1;
    if bd.t_o > inner {
        return Bottleneck {
            label: BottleneckLabel::O,
            dominant_cycles: bd.t_o,
            slack: bd.t_o - inner,
            runner_up: ranked[0].0,
        };
    }
    Bottleneck {
        label: ranked[0].0,
        dominant_cycles: ranked[0].1,
        slack: ranked[0].1 - ranked[1].1,
        runner_up: ranked[1].0,
    }
}

/// Effect of pruning `zeros` positions from every kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternVerdict {
    pub helps: bool,
    /// Reduction of the per-tile `Lat1`.
    pub tile_saving: u64,
    /// Reduction of the whole layer latency.
    pub layer_saving: u64,
}

/// Everything needed to re-evaluate one layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerContext<'a> {
    pub fpga: &'a FpgaSpec,
    pub shape: &'a LayerShape,
    pub design: &'a AcceleratorDesign,
    pub widths: &'a DataWidths,
    pub effects: &'a LayerEffects,
}

impl LayerContext<'_> {
    pub fn latency(&self) -> Result<LatencyBreakdown> {
        layer_latency(self.fpga, self.shape, self.design, self.widths, self.effects)
    }

    fn latency_with(
        &self,
        shape: &LayerShape,
        widths: &DataWidths,
        effects: &LayerEffects,
    ) -> Result<LatencyBreakdown> {
        layer_latency(self.fpga, shape, self.design, widths, effects)
    }
}

pub fn pattern_effectiveness(ctx: &LayerContext<'_>, zeros: u64) -> Result<PatternVerdict> {
    let before = ctx.latency()?;
    let total_zeros = ctx.effects.pattern_zeros + zeros;
    if ctx.shape.k < 2 || total_zeros >= ctx.shape.k * ctx.shape.k {
        return Ok(PatternVerdict {
            helps: false,
            tile_saving: 0,
            layer_saving: 0,
        });
    }
    let effects = LayerEffects {
        pattern_zeros: total_zeros,
        ..*ctx.effects
    };
    let after = ctx.latency_with(ctx.shape, ctx.widths, &effects)?;
    let layer_saving = before.lat_total - after.lat_total;
    Ok(PatternVerdict {
        helps: detect(&before).label == BottleneckLabel::C && layer_saving > 0,
        tile_saving: before.lat1 - after.lat1,
        layer_saving,
    })
}

/// Whether cutting `cut` channels reduces trip counts on either side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelVerdict {
    pub output_side: bool,
    pub input_side: bool,
}

impl ChannelVerdict {
    pub fn helps(&self) -> bool {
        self.output_side || self.input_side
    }
}

fn engine(design: &AcceleratorDesign, kind: ConvKind) -> (u64, u64) {
    match kind {
        ConvKind::Standard => (design.tm, design.tn),
        ConvKind::Depthwise => (design.tm_d, 1),
    }
}

/// Channels left after the cuts already in `effects`.
fn live_channels(ctx: &LayerContext<'_>) -> (u64, u64) {
    let m = ctx.shape.m.saturating_sub(ctx.effects.cut_out);
    let n = match ctx.shape.kind {
        ConvKind::Standard => ctx.shape.n.saturating_sub(ctx.effects.cut_in),
        ConvKind::Depthwise => 1,
    };
    (m, n)
}

pub fn channel_effectiveness(ctx: &LayerContext<'_>, bd: &LatencyBreakdown, cut: u64) -> ChannelVerdict {
    let (tm, tn) = engine(ctx.design, ctx.shape.kind);
    let (m, n) = live_channels(ctx);
    let output_side = cut > 0 && cut < m && (m - cut).div_ceil(tm) < m.div_ceil(tm);
    let input_side = ctx.shape.kind == ConvKind::Standard
        && cut > 0
        && cut < n
        && (n - cut).div_ceil(tn) < n.div_ceil(tn)
        && detect(bd).label != BottleneckLabel::O;
    ChannelVerdict {
        output_side,
        input_side,
    }
}

/// Smallest cut that drops one `ceil(x / t)` trip, if any cut can.
pub fn min_effective_cut(x: u64, t: u64) -> Option<u64> {
    let trips = x.div_ceil(t);
    (trips > 1).then(|| x - t * (trips - 1))
}

pub fn quant_effectiveness(bd: &LatencyBreakdown) -> bool {
    detect(bd).label == BottleneckLabel::W
}

/// Upper bound on the expansion probe.
const MAX_EXPANSION: u64 = 64;

/// Largest even `exp_n` that leaves the layer latency and its buffer fit
/// unchanged; 0 for compute-bound layers.
pub fn expansion_headroom(ctx: &LayerContext<'_>) -> Result<u64> {
    let before = ctx.latency()?;
    if detect(&before).label == BottleneckLabel::C {
        return Ok(0);
    }
    let mut best = 0;
    let mut exp = 2;
    while exp <= MAX_EXPANSION {
        let shape = LayerShape {
            k: ctx.shape.k + exp,
            ..*ctx.shape
        };
        let fits = buffer_blocks(ctx.fpga, ctx.design, shape.kind, shape.k, ctx.widths).total <= ctx.fpga.bram_blocks;
        let same = ctx.latency_with(&shape, ctx.widths, ctx.effects)?.lat_total == before.lat_total;
        if !(fits && same) {
            break;
        }
        best = exp;
        exp += 2;
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TechniqueVerdict {
    pub pattern_helps: bool,
    pub channel_helps_input: bool,
    pub channel_helps_output: bool,
    pub quant_helps: bool,
    pub expansion_free: bool,
    pub expansion_headroom: u64,
    pub min_effective_cut_in: Option<u64>,
    pub min_effective_cut_out: Option<u64>,
}

pub fn technique_verdict(ctx: &LayerContext<'_>, bd: &LatencyBreakdown) -> Result<TechniqueVerdict> {
    let (tm, tn) = engine(ctx.design, ctx.shape.kind);
    let (m, n) = live_channels(ctx);
    let label = detect(bd).label;
    let cut_out = min_effective_cut(m, tm);
    let cut_in = match ctx.shape.kind {
        ConvKind::Standard if label != BottleneckLabel::O => min_effective_cut(n, tn),
        _ => None,
    };
    let headroom = expansion_headroom(ctx)?;
    Ok(TechniqueVerdict {
        pattern_helps: pattern_effectiveness(ctx, 1)?.helps,
        channel_helps_input: cut_in.is_some(),
        channel_helps_output: cut_out.is_some(),
        quant_helps: quant_effectiveness(bd),
        expansion_free: headroom > 0,
        expansion_headroom: headroom,
        min_effective_cut_in: cut_in,
        min_effective_cut_out: cut_out,
    })
}

/// Per-label layer counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub c: usize,
    pub i: usize,
    pub w: usize,
    pub o: usize,
}

impl Histogram {
    pub fn add(&mut self, label: BottleneckLabel) {
        match label {
            BottleneckLabel::C => self.c += 1,
            BottleneckLabel::I => self.i += 1,
            BottleneckLabel::W => self.w += 1,
            BottleneckLabel::O => self.o += 1,
        }
    }

    pub fn as_tuple(&self) -> (usize, usize, usize, usize) {
        (self.c, self.i, self.w, self.o)
    }

    pub fn total(&self) -> usize {
        self.c + self.i + self.w + self.o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAnalysis {
    pub op_index: usize,
    pub name: String,
    pub shape: LayerShape,
    pub breakdown: LatencyBreakdown,
    pub bottleneck: Bottleneck,
    pub verdict: TechniqueVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkAnalysis {
    pub layers: Vec<LayerAnalysis>,
    pub histogram: Histogram,
    pub total_cycles: u64,
    pub total_ms: f64,
}

/// Labels and verdicts for every compute layer under one shared design.
pub fn analyze_network(fpga: &FpgaSpec, design: &AcceleratorDesign, workload: &Workload) -> Result<NetworkAnalysis> {
    let net = network_latency(fpga, design, workload)?;
    let mut layers = Vec::new();
    let mut histogram = Histogram::default();
    for (work, lat) in workload.layers.iter().zip(&net.layers) {
        let (Some(shape), Some(bd)) = (work.shape, lat.breakdown) else {
            continue;
        };
        let ctx = LayerContext {
            fpga,
            shape: &shape,
            design,
            widths: &work.widths,
            effects: &work.effects,
        };
        let bottleneck = detect(&bd);
        histogram.add(bottleneck.label);
        layers.push(LayerAnalysis {
            op_index: work.op_index,
            name: work.name.clone(),
            shape,
            breakdown: bd,
            bottleneck,
            verdict: technique_verdict(&ctx, &bd)?,
        });
    }
    Ok(NetworkAnalysis {
        layers,
        histogram,
        total_cycles: net.total_cycles,
        total_ms: net.total_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bd(t_comp: u64, t_i: u64, t_w: u64, t_o: u64, trips: u64) -> LatencyBreakdown {
        let lat1 = t_comp.max(t_i).max(t_w);
        LatencyBreakdown {
            t_comp,
            t_i,
            t_w,
            t_o,
            lat1,
            lat2: (trips * lat1).max(t_o),
            lat_total: 0,
            input_trips: trips,
            outer_trips: 1,
            lat_ms: 0.0,
        }
    }

    #[test]
    fn labels() {
        let c = detect(&bd(900, 200, 100, 50, 2));
        assert_eq!(
            (c.label, c.slack, c.runner_up),
            (BottleneckLabel::C, 700, BottleneckLabel::I)
        );
        let o = detect(&bd(900, 200, 100, 2000, 2));
        assert_eq!((o.label, o.slack), (BottleneckLabel::O, 200));
        let tie = detect(&bd(100, 300, 300, 0, 1));
        assert_eq!((tie.label, tie.slack), (BottleneckLabel::I, 0));
        assert!(!quant_effectiveness(&bd(100, 300, 300, 0, 1)));
        assert!(quant_effectiveness(&bd(100, 300, 301, 0, 1)));
        // Equal write-back does not take the label.
        assert_eq!(detect(&bd(10, 5, 5, 20, 2)).label, BottleneckLabel::C);
    }

    #[test]
    fn min_cut() {
        assert_eq!(min_effective_cut(512, 100), Some(12));
        assert_eq!(min_effective_cut(100, 100), None);
        assert_eq!(min_effective_cut(512, 36), Some(8));
    }

    #[test]
    fn histogram_counts() {
        let mut h = Histogram::default();
        for l in [BottleneckLabel::C, BottleneckLabel::C, BottleneckLabel::W] {
            h.add(l);
        }
        assert_eq!(h.as_tuple(), (2, 0, 1, 0));
        assert_eq!(h.total(), 3);
    }

    #[test]
    fn pattern_saving_clamped_by_ifm() {
        // t_comp = 900 at 10x10, k=3; IFM load 600 cycles.
        let fpga = FpgaSpec::default();
        let shape = LayerShape::conv(4, 4, 10, 10, 3);
        let design = AcceleratorDesign {
            tm: 4,
            tn: 6,
            tr: 10,
            tc: 10,
            tm_d: 0,
            ib_bits: 16,
            ob_bits: 512,
            wb_bits: 512,
        };
        let widths = DataWidths::default();
        let effects = LayerEffects::default();
        let ctx = LayerContext {
            fpga: &fpga,
            shape: &shape,
            design: &design,
            widths: &widths,
            effects: &effects,
        };
        let before = ctx.latency().unwrap();
        assert_eq!((before.t_comp, before.t_i), (900, 600));
        let v = pattern_effectiveness(&ctx, 4).unwrap();
        assert!(v.helps);
        assert_eq!(v.tile_saving, 300);
    }
}
