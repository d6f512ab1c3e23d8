use serde::{Deserialize, Serialize};

use super::{AcceleratorDesign, ConvKind, DataWidths, FpgaSpec, LayerEffects, LayerShape, Workload};
use crate::error::{Error, Result};

/// Per-layer latency terms, in cycles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub t_comp: u64,
    pub t_i: u64,
    pub t_w: u64,
    pub t_o: u64,
    pub lat1: u64,
    pub lat2: u64,
    pub lat_total: u64,
    /// `ceil(N'/tn)`: input-tile rounds per OFM flush.
    pub input_trips: u64,
    /// `ceil(R/tr) * ceil(C/tc) * ceil(M'/tm)`.
    pub outer_trips: u64,
    pub lat_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferBlocks {
    pub b_i: u64,
    pub b_o: u64,
    pub b_w: u64,
    pub total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferCycles {
    pub t_i: u64,
    pub t_w: u64,
    pub t_o: u64,
}

/// Cycles to compute one tile with `pattern_zeros` skipped kernel positions.
pub fn tile_compute_cycles(k: u64, tr: u64, tc: u64, pattern_zeros: u64) -> Result<u64> {
    if pattern_zeros >= k * k {
        return Err(Error::InvalidPattern(format!(
            "{pattern_zeros} zeros in a {k}x{k} kernel"
        )));
    }
    Ok((k * k - pattern_zeros) * tr * tc)
}

/// Double-buffered BRAM usage for a layer with kernel size `k`.
pub fn buffer_blocks(
    fpga: &FpgaSpec,
    design: &AcceleratorDesign,
    kind: ConvKind,
    k: u64,
    widths: &DataWidths,
) -> BufferBlocks {
    let (tm, tn) = design.engine(kind);
    let block = fpga.bram_bits_per_block;
    let pixels = design.tr * design.tc;
    let b_i = 2 * tn * (pixels * widths.bit_i as u64).div_ceil(block);
    let b_o = 2 * tm * (pixels * widths.bit_o as u64).div_ceil(block);
    let b_w = 2 * tm * tn * (k * k * widths.bit_w as u64).div_ceil(block);
    BufferBlocks {
        b_i,
        b_o,
        b_w,
        total: b_i + b_o + b_w,
    }
}

/// Off-chip transfer cycles for one IFM, weight and OFM tile.
pub fn tile_transfer_cycles(
    design: &AcceleratorDesign,
    kind: ConvKind,
    k: u64,
    widths: &DataWidths,
) -> Result<TransferCycles> {
    if design.ib_bits == 0 || design.ob_bits == 0 || design.wb_bits == 0 {
        return Err(Error::Config(format!(
            "zero bandwidth allocated (I={}, O={}, W={})",
            design.ib_bits, design.ob_bits, design.wb_bits
        )));
    }
    let (tm, tn) = design.engine(kind);
    let pixels = design.tr * design.tc;
    Ok(TransferCycles {
        t_i: (tn * pixels * widths.bit_i as u64).div_ceil(design.ib_bits),
        t_w: (tm * tn * k * k * widths.bit_w as u64).div_ceil(design.wb_bits),
        t_o: (tm * pixels * widths.bit_o as u64).div_ceil(design.ob_bits),
    })
}

/// Effective `(M', N')` after channel cuts; depthwise layers reduce over a
/// single input channel per output channel.
pub(crate) fn effective_channels(shape: &LayerShape, effects: &LayerEffects) -> Result<(u64, u64)> {
    let m = shape.m.checked_sub(effects.cut_out).filter(|&v| v > 0);
    let n = shape.n.checked_sub(effects.cut_in).filter(|&v| v > 0);
    match (m, n) {
        (Some(m), Some(n)) => Ok(match shape.kind {
            ConvKind::Standard => (m, n),
            ConvKind::Depthwise => (m, 1),
        }),
        _ => Err(Error::InvalidCompression(format!(
            "cuts (in {}, out {}) leave no channels in a {}x{} layer",
            effects.cut_in, effects.cut_out, shape.m, shape.n
        ))),
    }
}

pub(crate) fn check_engine(design: &AcceleratorDesign, kind: ConvKind) -> Result<()> {
    let (tm, tn) = design.engine(kind);
    if tm == 0 || tn == 0 || design.tr == 0 || design.tc == 0 {
        return Err(Error::Config(match kind {
            ConvKind::Depthwise => "depthwise layer needs a depthwise engine (tm_d > 0)".into(),
            ConvKind::Standard => "tile sizes must be positive".into(),
        }));
    }
    Ok(())
}

/// Closed-form latency of one convolution layer.
pub fn layer_latency(
    fpga: &FpgaSpec,
    shape: &LayerShape,
    design: &AcceleratorDesign,
    widths: &DataWidths,
    effects: &LayerEffects,
) -> Result<LatencyBreakdown> {
    check_engine(design, shape.kind)?;
    let (m, n) = effective_channels(shape, effects)?;
    let (tm, tn) = design.engine(shape.kind);
    let t_comp = tile_compute_cycles(shape.k, design.tr, design.tc, effects.pattern_zeros)?;
    let TransferCycles { t_i, t_w, t_o } = tile_transfer_cycles(design, shape.kind, shape.k, widths)?;
    let lat1 = t_comp.max(t_i).max(t_w);
    let input_trips = n.div_ceil(tn);
    let lat2 = (input_trips * lat1).max(t_o);
    let outer_trips = shape.r.div_ceil(design.tr) * shape.c.div_ceil(design.tc) * m.div_ceil(tm);
    let lat_total = outer_trips * lat2 + (t_o + lat1);
    Ok(LatencyBreakdown {
        t_comp,
        t_i,
        t_w,
        t_o,
        lat1,
        lat2,
        lat_total,
        input_trips,
        outer_trips,
        lat_ms: fpga.cycles_to_ms(lat_total),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerLatency {
    pub op_index: usize,
    pub name: String,
    /// `None` for ops outside the analytical model.
    pub breakdown: Option<LatencyBreakdown>,
    pub cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLatency {
    pub layers: Vec<LayerLatency>,
    pub total_cycles: u64,
    pub total_ms: f64,
    /// Largest per-layer buffer requirement.
    pub buffer_blocks: u64,
}

/// Sums per-layer latency for one shared design; every layer must fit the
/// DSP, bandwidth and BRAM budgets.
pub fn network_latency(fpga: &FpgaSpec, design: &AcceleratorDesign, workload: &Workload) -> Result<NetworkLatency> {
    design.check_resources(fpga)?;
    let mut layers = Vec::with_capacity(workload.layers.len());
    let mut total = 0u64;
    let mut worst_buffer = 0u64;
    for layer in &workload.layers {
        let (breakdown, cycles) = match &layer.shape {
            Some(shape) => {
                layer.widths.validate()?;
                let buffers = buffer_blocks(fpga, design, shape.kind, shape.k, &layer.widths);
                if buffers.total > fpga.bram_blocks {
                    return Err(Error::DesignInfeasible {
                        layer: layer.name.clone(),
                        constraint: format!(
                            "bram: {} blocks (I {}, O {}, W {}) > {}",
                            buffers.total, buffers.b_i, buffers.b_o, buffers.b_w, fpga.bram_blocks
                        ),
                    });
                }
                worst_buffer = worst_buffer.max(buffers.total);
                let bd = layer_latency(fpga, shape, design, &layer.widths, &layer.effects).map_err(|e| match e {
                    Error::Config(msg) => Error::DesignInfeasible {
                        layer: layer.name.clone(),
                        constraint: msg,
                    },
                    other => other,
                })?;
                (Some(bd), bd.lat_total)
            }
            None => (None, layer.fixed_cycles),
        };
        total += cycles;
        layers.push(LayerLatency {
            op_index: layer.op_index,
            name: layer.name.clone(),
            breakdown,
            cycles,
        });
    }
    Ok(NetworkLatency {
        layers,
        total_cycles: total,
        total_ms: fpga.cycles_to_ms(total),
        buffer_blocks: worst_buffer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fpga() -> FpgaSpec {
        FpgaSpec::default()
    }

    #[test]
    fn compute_cycles_examples() {
        assert_eq!(tile_compute_cycles(3, 10, 10, 0).unwrap(), 900);
        assert_eq!(tile_compute_cycles(3, 10, 10, 4).unwrap(), 500);
        assert_eq!(tile_compute_cycles(1, 1, 1, 0).unwrap(), 1);
        assert!(tile_compute_cycles(3, 10, 10, 9).is_err());
    }

    #[test]
    fn buffer_examples() {
        let w = DataWidths::default();
        let d = AcceleratorDesign::with_lanes(70, 36, 10, 10, 0, (18, 6, 2), 16);
        let b = buffer_blocks(&fpga(), &d, ConvKind::Standard, 3, &w);
        assert_eq!(b.b_i, 72);
        assert_eq!(b.b_w, 5040);
        let d64 = AcceleratorDesign { tr: 64, tc: 64, ..d };
        assert_eq!(buffer_blocks(&fpga(), &d64, ConvKind::Standard, 3, &w).b_o, 560);
    }

    #[test]
    fn transfer_examples() {
        let w = DataWidths::default();
        let d = AcceleratorDesign::with_lanes(70, 36, 10, 10, 0, (18, 6, 2), 16);
        let t = tile_transfer_cycles(&d, ConvKind::Standard, 3, &w).unwrap();
        assert_eq!(t.t_i, 200);
        assert_eq!(t.t_w, 11340);
        let half = tile_transfer_cycles(&d, ConvKind::Standard, 3, &w.with_weight_bits(8)).unwrap();
        assert_eq!(half.t_w * 2, t.t_w);
        let zero = AcceleratorDesign { wb_bits: 0, ..d };
        assert!(tile_transfer_cycles(&zero, ConvKind::Standard, 3, &w).is_err());
    }

    #[test]
    fn single_tile_layer() {
        let d = AcceleratorDesign::with_lanes(4, 4, 6, 6, 0, (2, 2, 2), 16);
        let shape = LayerShape::conv(4, 4, 6, 6, 3);
        let bd = layer_latency(&fpga(), &shape, &d, &DataWidths::default(), &LayerEffects::default()).unwrap();
        assert_eq!(bd.outer_trips, 1);
        assert_eq!(bd.lat2, bd.lat1.max(bd.t_o));
        assert_eq!(bd.lat_total, bd.lat2 + bd.t_o + bd.lat1);
        assert_eq!(bd.t_comp, 9 * 36);
        assert_eq!(bd.t_i, (4 * 36 * 16u64).div_ceil(32));
    }

    #[test]
    fn output_cut_drops_one_outer_trip() {
        let d = AcceleratorDesign::with_lanes(70, 36, 7, 7, 0, (18, 6, 2), 16);
        let shape = LayerShape::conv(512, 512, 7, 7, 3);
        let w = DataWidths::default();
        let base = layer_latency(&fpga(), &shape, &d, &w, &LayerEffects::default()).unwrap();
        let cut = LayerEffects {
            cut_out: 32,
            ..Default::default()
        };
        let after = layer_latency(&fpga(), &shape, &d, &w, &cut).unwrap();
        assert_eq!(base.outer_trips, 8);
        assert_eq!(after.outer_trips, 7);
        assert_eq!(base.lat_total - after.lat_total, base.lat2);
    }

    #[test]
    fn depthwise_uses_its_engine() {
        let d = AcceleratorDesign::with_lanes(8, 8, 8, 8, 16, (4, 4, 4), 16);
        let shape = LayerShape::depthwise(32, 8, 8, 3);
        let bd = layer_latency(&fpga(), &shape, &d, &DataWidths::default(), &LayerEffects::default()).unwrap();
        assert_eq!(bd.input_trips, 1);
        assert_eq!(bd.outer_trips, 2);
        assert_eq!(bd.t_w, (16 * 9 * 16u64).div_ceil(64));
        let none = AcceleratorDesign { tm_d: 0, ..d };
        assert!(layer_latency(&fpga(), &shape, &none, &DataWidths::default(), &LayerEffects::default()).is_err());
    }

    #[test]
    fn cut_to_nothing_is_invalid() {
        let d = AcceleratorDesign::with_lanes(4, 4, 6, 6, 0, (2, 2, 2), 16);
        let shape = LayerShape::conv(4, 4, 6, 6, 3);
        let cut = LayerEffects {
            cut_in: 4,
            ..Default::default()
        };
        assert!(matches!(
            layer_latency(&fpga(), &shape, &d, &DataWidths::default(), &cut),
            Err(Error::InvalidCompression(_))
        ));
    }

    #[test]
    fn doubling_clock_halves_ms() {
        let d = AcceleratorDesign::with_lanes(4, 4, 6, 6, 0, (2, 2, 2), 16);
        let shape = LayerShape::conv(8, 8, 12, 12, 3);
        let w = DataWidths::default();
        let e = LayerEffects::default();
        let slow = layer_latency(&fpga(), &shape, &d, &w, &e).unwrap();
        let fast_fpga = FpgaSpec {
            clock_hz: 400_000_000,
            ..fpga()
        };
        let fast = layer_latency(&fast_fpga, &shape, &d, &w, &e).unwrap();
        assert_eq!(slow.lat_total, fast.lat_total);
        assert_eq!(slow.lat_ms, 2.0 * fast.lat_ms);
    }
}
