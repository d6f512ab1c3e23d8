//! Analytical latency and resource model of a tiled, double-buffered
//! convolution accelerator, with a cycle-approximate simulator that serves
//! as an independent check on the closed-form model.
//!
//! All quantities are integer cycles, bits or BRAM blocks. Bandwidths are
//! bits per cycle; one lane is `compute_word_bits` bits.

mod latency;
mod optimize;
mod sim;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netzoo::{NetworkArch, OpKind};

pub use latency::{
    buffer_blocks, layer_latency, network_latency, tile_compute_cycles, tile_transfer_cycles, BufferBlocks,
    LatencyBreakdown, LayerLatency, NetworkLatency, TransferCycles,
};
pub use optimize::{candidate_tilings, lane_splits, optimize_design, tile_candidates, top_designs, Tiling};
pub use sim::simulate_layer;

/// FPGA resources available to the accelerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpgaSpec {
    #[serde(rename = "dsp")]
    pub dsp_total: u64,
    pub bram_blocks: u64,
    #[serde(rename = "block_bits", default = "default_block_bits")]
    pub bram_bits_per_block: u64,
    #[serde(rename = "bw_bits_per_cycle")]
    pub bw_total_bits_per_cycle: u64,
    pub clock_hz: u64,
    #[serde(rename = "word_bits", default = "default_word_bits")]
    pub compute_word_bits: u64,
}

fn default_block_bits() -> u64 {
    18 * 1024
}

fn default_word_bits() -> u64 {
    16
}

impl Default for FpgaSpec {
    /// Xilinx ZCU102: 2520 DSPs, 1824 BRAM18 blocks, 4 HP ports of 128 bits,
    /// 200 MHz, 16-bit fixed point.
    fn default() -> Self {
        Self {
            dsp_total: 2520,
            bram_blocks: 1824,
            bram_bits_per_block: 18 * 1024,
            bw_total_bits_per_cycle: 512,
            clock_hz: 200_000_000,
            compute_word_bits: 16,
        }
    }
}

impl FpgaSpec {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("dsp", self.dsp_total),
            ("bram_blocks", self.bram_blocks),
            ("block_bits", self.bram_bits_per_block),
            ("bw_bits_per_cycle", self.bw_total_bits_per_cycle),
            ("clock_hz", self.clock_hz),
            ("word_bits", self.compute_word_bits),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("fpga field `{name}` must be positive")));
        }
        if !self.bw_total_bits_per_cycle.is_multiple_of(self.compute_word_bits) {
            return Err(Error::Config(format!(
                "bandwidth {} bits/cycle is not a multiple of the {}-bit word",
                self.bw_total_bits_per_cycle, self.compute_word_bits
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::parse("fpga", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Number of `compute_word_bits`-wide lanes in the total bandwidth.
    pub fn lanes(&self) -> u64 {
        self.bw_total_bits_per_cycle / self.compute_word_bits
    }

    pub fn cycles_to_ms(&self, cycles: u64) -> f64 {
        cycles as f64 * 1e3 / self.clock_hz as f64
    }
}

/// Loop tiling plus off-chip bandwidth allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AcceleratorDesign {
    pub tm: u64,
    pub tn: u64,
    pub tr: u64,
    pub tc: u64,
    /// Output-channel tile of the depthwise engine; 0 when absent.
    pub tm_d: u64,
    pub ib_bits: u64,
    pub ob_bits: u64,
    pub wb_bits: u64,
}

impl AcceleratorDesign {
    /// Builds a design with bandwidth given in lanes of `word_bits`.
    #[allow(clippy::too_many_arguments)]
    pub fn with_lanes(tm: u64, tn: u64, tr: u64, tc: u64, tm_d: u64, lanes: (u64, u64, u64), word_bits: u64) -> Self {
        Self {
            tm,
            tn,
            tr,
            tc,
            tm_d,
            ib_bits: lanes.0 * word_bits,
            ob_bits: lanes.1 * word_bits,
            wb_bits: lanes.2 * word_bits,
        }
    }

    pub fn lanes(&self, word_bits: u64) -> (u64, u64, u64) {
        (
            self.ib_bits / word_bits,
            self.ob_bits / word_bits,
            self.wb_bits / word_bits,
        )
    }

    /// DSP count used by both engines.
    pub fn dsp_used(&self) -> u64 {
        self.tm * self.tn + self.tm_d
    }

    /// Checks the DSP and bandwidth budgets (buffer capacity depends on the
    /// layers and is checked by [`network_latency`]).
    pub fn check_resources(&self, fpga: &FpgaSpec) -> Result<()> {
        if self.tm == 0 || self.tn == 0 || self.tr == 0 || self.tc == 0 {
            return Err(Error::Config("tile sizes must be positive".into()));
        }
        if self.dsp_used() > fpga.dsp_total {
            return Err(Error::DesignInfeasible {
                layer: "*".into(),
                constraint: format!("dsp: tm*tn + tm_d = {} > {}", self.dsp_used(), fpga.dsp_total),
            });
        }
        let bw = self.ib_bits + self.ob_bits + self.wb_bits;
        if bw > fpga.bw_total_bits_per_cycle {
            return Err(Error::DesignInfeasible {
                layer: "*".into(),
                constraint: format!("bandwidth: {bw} bits/cycle > {}", fpga.bw_total_bits_per_cycle),
            });
        }
        Ok(())
    }

    /// `(tm, tn)` of the engine that runs a layer of the given kind.
    pub(crate) fn engine(&self, kind: ConvKind) -> (u64, u64) {
        match kind {
            ConvKind::Standard => (self.tm, self.tn),
            ConvKind::Depthwise => (self.tm_d, 1),
        }
    }
}

/// Bit-widths of the IFM, weight and OFM streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DataWidths {
    pub bit_i: u32,
    pub bit_w: u32,
    pub bit_o: u32,
}

impl Default for DataWidths {
    fn default() -> Self {
        Self::uniform(16)
    }
}

impl DataWidths {
    pub fn uniform(bits: u32) -> Self {
        Self {
            bit_i: bits,
            bit_w: bits,
            bit_o: bits,
        }
    }

    pub fn with_weight_bits(self, bit_w: u32) -> Self {
        Self { bit_w, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("bit_i", self.bit_i), ("bit_w", self.bit_w), ("bit_o", self.bit_o)] {
            if !(1..=32).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [1, 32]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConvKind {
    Standard,
    Depthwise,
}

/// Dimensions of one convolution: `m` output channels, `n` input channels,
/// `r x c` output feature map, `k x k` kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerShape {
    pub kind: ConvKind,
    pub m: u64,
    pub n: u64,
    pub r: u64,
    pub c: u64,
    pub k: u64,
}

impl LayerShape {
    pub fn conv(m: u64, n: u64, r: u64, c: u64, k: u64) -> Self {
        Self {
            kind: ConvKind::Standard,
            m,
            n,
            r,
            c,
            k,
        }
    }

    pub fn depthwise(ch: u64, r: u64, c: u64, k: u64) -> Self {
        Self {
            kind: ConvKind::Depthwise,
            m: ch,
            n: ch,
            r,
            c,
            k,
        }
    }

    /// Shape of `net.ops()[index]`, or `None` for ops outside the model.
    pub fn of_op(net: &NetworkArch, index: usize) -> Option<Self> {
        let op = &net.ops()[index];
        let src = net.node(&op.src)?;
        let dst = net.node(&op.dst)?;
        let (r, c) = (dst.rows as u64, dst.cols as u64);
        match op.kind {
            OpKind::Conv => Some(Self::conv(dst.channels as u64, src.channels as u64, r, c, op.k as u64)),
            OpKind::DepthwiseConv => Some(Self::depthwise(dst.channels as u64, r, c, op.k as u64)),
            OpKind::Pool | OpKind::Linear => None,
        }
    }
}

/// How compression changes a layer's cost: pattern zeros per kernel, and
/// channels removed from its input and output feature maps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerEffects {
    pub pattern_zeros: u64,
    pub cut_in: u64,
    pub cut_out: u64,
}

/// One entry of a network's cost list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerWork {
    pub op_index: usize,
    pub name: String,
    /// `None` for ops outside the analytical model.
    pub shape: Option<LayerShape>,
    pub widths: DataWidths,
    pub effects: LayerEffects,
    /// Latency charged to ops outside the model.
    pub fixed_cycles: u64,
}

/// Per-op cost inputs for a whole network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workload {
    pub layers: Vec<LayerWork>,
}

impl Workload {
    /// Uncompressed network at uniform 16-bit precision.
    pub fn baseline(net: &NetworkArch) -> Self {
        Self::with_widths(net, DataWidths::default())
    }

    pub fn with_widths(net: &NetworkArch, widths: DataWidths) -> Self {
        let layers = net
            .ops()
            .iter()
            .enumerate()
            .map(|(i, op)| LayerWork {
                op_index: i,
                name: format!("{}:{}", i, op.dst),
                shape: LayerShape::of_op(net, i),
                widths,
                effects: LayerEffects::default(),
                fixed_cycles: if op.kind.is_compute() {
                    0
                } else {
                    op.fixed_latency_cycles.unwrap_or(0)
                },
            })
            .collect();
        Self { layers }
    }

    pub fn compute_layers(&self) -> impl Iterator<Item = (&LayerWork, LayerShape)> {
        self.layers.iter().filter_map(|l| l.shape.map(|s| (l, s)))
    }

    pub fn has_depthwise(&self) -> bool {
        self.compute_layers().any(|(_, s)| s.kind == ConvKind::Depthwise)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fpga_file_round_trip() {
        let text = r#"{"dsp":2520,"bram_blocks":1824,"block_bits":18432,"bw_bits_per_cycle":512,"clock_hz":200000000,"word_bits":16}"#;
        let spec = FpgaSpec::from_json(text).unwrap();
        assert_eq!(spec, FpgaSpec::default());
        assert_eq!(spec.lanes(), 32);
    }

    #[test]
    fn fpga_rejects_bad_values() {
        let zero = r#"{"dsp":0,"bram_blocks":1,"bw_bits_per_cycle":512,"clock_hz":1}"#;
        assert!(FpgaSpec::from_json(zero).is_err());
        let odd = r#"{"dsp":1,"bram_blocks":1,"bw_bits_per_cycle":500,"clock_hz":1}"#;
        assert!(FpgaSpec::from_json(odd).is_err());
    }

    #[test]
    fn design_budget_checks() {
        let fpga = FpgaSpec::default();
        let ok = AcceleratorDesign::with_lanes(70, 36, 14, 14, 0, (18, 6, 2), 16);
        ok.check_resources(&fpga).unwrap();
        let dsp = AcceleratorDesign::with_lanes(100, 16, 14, 14, 921, (10, 10, 10), 16);
        assert!(dsp.check_resources(&fpga).is_err());
        let bw = AcceleratorDesign::with_lanes(10, 10, 14, 14, 0, (20, 10, 3), 16);
        assert!(bw.check_resources(&fpga).is_err());
    }
}
