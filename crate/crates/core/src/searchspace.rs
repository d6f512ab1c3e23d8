//! Joint compression/hardware search space built from bottleneck labels.
//!
//! Compute-bound layers get pattern choices, weight-bound layers get
//! quantization choices, IFM- and OFM-bound layers get channel cuts on the
//! adjacent node and, when it is free, filter expansion. A layer whose
//! runner-up term is within the near-tie fraction also gets the runner-up's
//! technique. Lane splits and tilings are always searchable.
//!
//! Every dimension lists its identity choice first, so index 0 of the
//! mixed-radix encoding is the uncompressed baseline on the base design.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bottleneck::{BottleneckLabel, NetworkAnalysis};
use crate::compress::{binomial, chain_neighbours, derive_int_bits};
use crate::error::{Error, Result};
use crate::netzoo::NetworkArch;
use crate::perfmodel::{lane_splits, top_designs, AcceleratorDesign, ConvKind, FpgaSpec, Tiling, Workload};

/// Bounds on how many choices each dimension may offer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceCaps {
    /// Pattern categories `1..=n` zeros per kernel.
    pub pattern_categories: usize,
    pub pat_n: Vec<usize>,
    pub cut_levels: usize,
    pub quant_levels: usize,
    pub exp_levels: usize,
    pub lane_splits: usize,
    pub tilings: usize,
    /// Runner-up within this fraction of the dominant term counts as a tie.
    pub near_tie: f64,
    /// Fewest fraction bits a quantized layer may keep.
    pub frac_min: u32,
}

impl Default for SpaceCaps {
    fn default() -> Self {
        Self {
            pattern_categories: 4,
            pat_n: vec![2, 4],
            cut_levels: 3,
            quant_levels: 4,
            exp_levels: 2,
            lane_splits: 8,
            tilings: 4,
            near_tie: 0.1,
            frac_min: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatternChoice {
    pub pat_c: usize,
    pub pat_n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpace {
    pub op_index: usize,
    pub name: String,
    pub label: BottleneckLabel,
    pub k: usize,
    /// Integer bits the layer's weights need.
    pub int_bits: u32,
    pub pattern_choices: Vec<Option<PatternChoice>>,
    /// Fraction bits; `None` keeps 16-bit weights.
    pub quant_choices: Vec<Option<u32>>,
    pub exp_choices: Vec<usize>,
}

/// Channel cuts on one node between two convolutions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeCutSpace {
    pub node: String,
    pub producer: usize,
    pub consumer: usize,
    pub choices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareSpace {
    pub lane_splits: Vec<(u64, u64, u64)>,
    pub tilings: Vec<Tiling>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DimKind {
    Pattern,
    Quant,
    Expansion,
    Cut,
    Lanes,
    Tiling,
}

/// One searchable decision; `target` indexes `layers` or `cuts`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub kind: DimKind,
    pub target: usize,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerChoice {
    pub op_index: usize,
    pub pattern: Option<PatternChoice>,
    pub quant_frac: Option<u32>,
    pub int_bits: u32,
    pub exp: usize,
}

impl LayerChoice {
    /// Weight bit-width this choice implies.
    pub fn weight_bits(&self) -> u32 {
        self.quant_frac.map_or(16, |f| self.int_bits + f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeCut {
    pub node: String,
    pub cut: usize,
}

/// A decoded point of the space: per-layer compression plus a design.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompressionConfig {
    pub model: String,
    pub layers: Vec<LayerChoice>,
    pub cuts: Vec<NodeCut>,
    pub design: AcceleratorDesign,
}

impl CompressionConfig {
    /// No compression at all (the design may still differ from baseline).
    pub fn is_uncompressed(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.pattern.is_none() && l.quant_frac.is_none() && l.exp == 0)
            && self.cuts.iter().all(|c| c.cut == 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpace {
    pub model: String,
    pub layers: Vec<LayerSpace>,
    pub cuts: Vec<NodeCutSpace>,
    pub hardware: HardwareSpace,
    pub dims: Vec<Dimension>,
    pub cardinality: u128,
    word_bits: u64,
    baseline: Workload,
}

fn wants(label: BottleneckLabel, runner_up: Option<BottleneckLabel>, target: BottleneckLabel) -> bool {
    label == target || runner_up == Some(target)
}

fn quant_levels(int_bits: u32, caps: &SpaceCaps) -> Vec<u32> {
    let hi = 15i64 - int_bits as i64;
    let lo = caps.frac_min as i64;
    if hi < lo || caps.quant_levels == 0 {
        return Vec::new();
    }
    let span = (hi - lo) as usize;
    let n = caps.quant_levels.min(span + 1);
    if n == 1 {
        return vec![hi as u32];
    }
    let mut out: Vec<u32> = (0..n)
        .map(|j| (hi - ((j * span) as f64 / (n - 1) as f64).round() as i64) as u32)
        .collect();
    out.dedup();
    out
}

/// Baseline lane split first, then the nearest splits by L1 distance.
fn nearby_splits(base: (u64, u64, u64), lanes: u64, cap: usize) -> Vec<(u64, u64, u64)> {
    let mut all = lane_splits(lanes);
    let dist = |s: &(u64, u64, u64)| s.0.abs_diff(base.0) + s.1.abs_diff(base.1) + s.2.abs_diff(base.2);
    all.sort_by_key(|s| (dist(s), *s));
    if all.first() != Some(&base) {
        all.insert(0, base);
    }
    all.truncate(cap.max(1));
    all
}

fn tiling_of(d: &AcceleratorDesign) -> Tiling {
    Tiling {
        tm: d.tm,
        tn: d.tn,
        tm_d: d.tm_d,
        tr: d.tr,
        tc: d.tc,
    }
}

pub fn build_space(
    net: &NetworkArch,
    fpga: &FpgaSpec,
    design: &AcceleratorDesign,
    analysis: &NetworkAnalysis,
    caps: &SpaceCaps,
) -> Result<JointSpace> {
    let baseline = Workload::baseline(net);
    let mut layers = Vec::new();
    let mut cut_requests: Vec<(String, u64)> = Vec::new();
    for la in &analysis.layers {
        let op = &net.ops()[la.op_index];
        let b = la.bottleneck;
        let runner_up = b.near_tie(caps.near_tie).then_some(b.runner_up);
        let label = b.label;

        let mut pattern_choices = vec![None];
        if wants(label, runner_up, BottleneckLabel::C) && op.k >= 2 {
            let cells = (op.k * op.k) as u64;
            for pat_c in 1..=caps.pattern_categories.min(op.k * op.k - 1) {
                for &pat_n in &caps.pat_n {
                    if pat_n >= 1 && (pat_n as u128) <= binomial(cells, pat_c as u64) {
                        pattern_choices.push(Some(PatternChoice { pat_c, pat_n }));
                    }
                }
            }
        }

        let weights = op.weights.as_ref().expect("compute ops carry weights");
        let int_bits = derive_int_bits(weights);
        let mut quant_choices = vec![None];
        if wants(label, runner_up, BottleneckLabel::W) {
            quant_choices.extend(quant_levels(int_bits, caps).into_iter().map(Some));
        }

        let mut exp_choices = vec![0];
        if pattern_choices.len() == 1 && label != BottleneckLabel::C {
            let h = la.verdict.expansion_headroom as usize;
            exp_choices.extend((1..=caps.exp_levels).map(|j| 2 * j).filter(|&e| e <= h));
        }

        let (tm, tn) = match la.shape.kind {
            ConvKind::Standard => (design.tm, design.tn),
            ConvKind::Depthwise => (design.tm_d, 1),
        };
        if wants(label, runner_up, BottleneckLabel::I) && la.shape.kind == ConvKind::Standard {
            cut_requests.push((op.src.clone(), tn));
        }
        if label == BottleneckLabel::O {
            cut_requests.push((op.dst.clone(), tm));
        }

        layers.push(LayerSpace {
            op_index: la.op_index,
            name: la.name.clone(),
            label,
            k: op.k,
            int_bits,
            pattern_choices,
            quant_choices,
            exp_choices,
        });
    }

    let mut cuts: Vec<NodeCutSpace> = Vec::new();
    for (node, step) in cut_requests {
        let Ok((producer, consumer)) = chain_neighbours(net, &node) else {
            continue;
        };
        let channels = net.node(&node).expect("op nodes exist").channels;
        let step = step as usize;
        match cuts.iter_mut().find(|c| c.node == node) {
            Some(existing) if existing.choices.get(1).is_some_and(|&s| s <= step) => {}
            slot => {
                let choices: Vec<usize> = (0..=caps.cut_levels)
                    .map(|j| j * step)
                    .take_while(|&c| c < channels)
                    .collect();
                let entry = NodeCutSpace {
                    node: node.clone(),
                    producer,
                    consumer,
                    choices,
                };
                match slot {
                    Some(existing) => *existing = entry,
                    None => cuts.push(entry),
                }
            }
        }
    }
    cuts.retain(|c| c.choices.len() > 1);

    let word = fpga.compute_word_bits;
    let base_tiling = tiling_of(design);
    let mut tilings = vec![base_tiling];
    if caps.tilings > 1 {
        for (d, _) in top_designs(fpga, &baseline, caps.tilings)? {
            let t = tiling_of(&d);
            if !tilings.contains(&t) && tilings.len() < caps.tilings {
                tilings.push(t);
            }
        }
    }
    let hardware = HardwareSpace {
        lane_splits: nearby_splits(design.lanes(word), fpga.lanes(), caps.lane_splits),
        tilings,
    };

    let mut dims = Vec::new();
    for (i, l) in layers.iter().enumerate() {
        for (kind, size) in [
            (DimKind::Pattern, l.pattern_choices.len()),
            (DimKind::Quant, l.quant_choices.len()),
            (DimKind::Expansion, l.exp_choices.len()),
        ] {
            if size > 1 {
                dims.push(Dimension { kind, target: i, size });
            }
        }
    }
    for (i, c) in cuts.iter().enumerate() {
        dims.push(Dimension {
            kind: DimKind::Cut,
            target: i,
            size: c.choices.len(),
        });
    }
    for (kind, size) in [
        (DimKind::Lanes, hardware.lane_splits.len()),
        (DimKind::Tiling, hardware.tilings.len()),
    ] {
        if size > 1 {
            dims.push(Dimension { kind, target: 0, size });
        }
    }
    let cardinality = dims.iter().try_fold(1u128, |acc, d| acc.checked_mul(d.size as u128));
    let cardinality = cardinality
        .ok_or_else(|| Error::SpaceTooLarge(format!("{} dimensions overflow a 128-bit index", dims.len())))?;
    if dims.is_empty() {
        log::warn!("search space for `{}` is a single point", net.name());
    }

    Ok(JointSpace {
        model: net.name().to_string(),
        layers,
        cuts,
        hardware,
        dims,
        cardinality,
        word_bits: word,
        baseline,
    })
}

impl JointSpace {
    pub fn baseline_workload(&self) -> &Workload {
        &self.baseline
    }

    /// Mixed-radix digits, most significant dimension first.
    pub fn index_to_choices(&self, index: u128) -> Result<Vec<usize>> {
        if index >= self.cardinality {
            return Err(Error::IndexOutOfRange {
                index,
                cardinality: self.cardinality,
            });
        }
        let mut rest = index;
        let mut digits = vec![0; self.dims.len()];
        for (d, slot) in self.dims.iter().zip(digits.iter_mut()).rev() {
            *slot = (rest % d.size as u128) as usize;
            rest /= d.size as u128;
        }
        Ok(digits)
    }

    pub fn choices_to_index(&self, choices: &[usize]) -> Result<u128> {
        self.check_choices(choices)?;
        Ok(self
            .dims
            .iter()
            .zip(choices)
            .fold(0u128, |acc, (d, &c)| acc * d.size as u128 + c as u128))
    }

    fn check_choices(&self, choices: &[usize]) -> Result<()> {
        if choices.len() != self.dims.len() {
            return Err(Error::Contract(format!(
                "{} choices for {} dimensions",
                choices.len(),
                self.dims.len()
            )));
        }
        if let Some((i, (d, &c))) = self
            .dims
            .iter()
            .zip(choices)
            .enumerate()
            .find(|(_, (d, &c))| c >= d.size)
        {
            return Err(Error::Contract(format!(
                "choice {c} out of range for dimension {i} of size {}",
                d.size
            )));
        }
        Ok(())
    }

    pub fn config(&self, choices: &[usize]) -> Result<CompressionConfig> {
        self.check_choices(choices)?;
        let mut layer_digits = vec![[0usize; 3]; self.layers.len()];
        let mut cut_digits = vec![0usize; self.cuts.len()];
        let (mut lanes, mut tiling) = (0, 0);
        for (d, &c) in self.dims.iter().zip(choices) {
            match d.kind {
                DimKind::Pattern => layer_digits[d.target][0] = c,
                DimKind::Quant => layer_digits[d.target][1] = c,
                DimKind::Expansion => layer_digits[d.target][2] = c,
                DimKind::Cut => cut_digits[d.target] = c,
                DimKind::Lanes => lanes = c,
                DimKind::Tiling => tiling = c,
            }
        }
        let layers = self
            .layers
            .iter()
            .zip(&layer_digits)
            .map(|(l, [p, q, e])| LayerChoice {
                op_index: l.op_index,
                pattern: l.pattern_choices[*p],
                quant_frac: l.quant_choices[*q],
                int_bits: l.int_bits,
                exp: l.exp_choices[*e],
            })
            .collect();
        let cuts = self
            .cuts
            .iter()
            .zip(&cut_digits)
            .map(|(c, &d)| NodeCut {
                node: c.node.clone(),
                cut: c.choices[d],
            })
            .collect();
        let t = self.hardware.tilings[tiling];
        let design = AcceleratorDesign::with_lanes(
            t.tm,
            t.tn,
            t.tr,
            t.tc,
            t.tm_d,
            self.hardware.lane_splits[lanes],
            self.word_bits,
        );
        Ok(CompressionConfig {
            model: self.model.clone(),
            layers,
            cuts,
            design,
        })
    }

    pub fn index_to_config(&self, index: u128) -> Result<CompressionConfig> {
        self.config(&self.index_to_choices(index)?)
    }

    /// Uniform draw over all `cardinality` points.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let index = rng.gen_range(0..self.cardinality);
        self.index_to_choices(index).expect("index drawn in range")
    }

    /// Cost inputs for the network compressed by `config`.
    pub fn workload(&self, config: &CompressionConfig) -> Workload {
        let mut wl = self.baseline.clone();
        for choice in &config.layers {
            if let Some(layer) = wl.layers.iter_mut().find(|l| l.op_index == choice.op_index) {
                if let Some(p) = choice.pattern {
                    layer.effects.pattern_zeros = p.pat_c as u64;
                }
                layer.widths.bit_w = choice.weight_bits();
                if let Some(shape) = layer.shape.as_mut() {
                    shape.k += choice.exp as u64;
                }
            }
        }
        for cut in config.cuts.iter().filter(|c| c.cut > 0) {
            let Some(space) = self.cuts.iter().find(|c| c.node == cut.node) else {
                continue;
            };
            for layer in wl.layers.iter_mut() {
                if layer.op_index == space.producer {
                    layer.effects.cut_out += cut.cut as u64;
                }
                if layer.op_index == space.consumer {
                    layer.effects.cut_in += cut.cut as u64;
                }
            }
        }
        wl
    }
}
