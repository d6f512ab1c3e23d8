//! Grid search for the best shared accelerator design.
//!
//! Candidates are `(tm, tn, tm_d)` DSP splits times `(tr, tc)` from a fixed
//! divisor-friendly set times every lane split using the full bandwidth.
//! Small DSP budgets enumerate every `(tm, tn)` pair; large ones keep the
//! pairs that saturate the DSP/BRAM budget along either axis. Tilings are
//! visited in order of a compute-only lower bound and pruned once the bound
//! exceeds the best latency found, so the result equals the full scan.
//! Ties break lexicographically on `(latency, tm, tn, tm_d, tr, tc, lanes)`.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::latency::buffer_blocks;
use super::{AcceleratorDesign, ConvKind, FpgaSpec, Workload};
use crate::error::{Error, Result};

/// Tile-size candidates for `tr` and `tc`.
pub const TILE_CANDIDATES: [u64; 11] = [7, 8, 10, 13, 14, 16, 26, 28, 32, 56, 64];

/// Pair counts up to this size are enumerated exhaustively.
const EXHAUSTIVE_PAIRS: u64 = 4096;

/// Loop-tiling part of a design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tiling {
    pub tm: u64,
    pub tn: u64,
    pub tm_d: u64,
    pub tr: u64,
    pub tc: u64,
}

/// `TILE_CANDIDATES` not exceeding `dim`, or `[dim]` when none fit.
pub fn tile_candidates(dim: u64) -> Vec<u64> {
    let fit: Vec<u64> = TILE_CANDIDATES.iter().copied().filter(|&t| t <= dim).collect();
    if fit.is_empty() {
        vec![dim.max(1)]
    } else {
        fit
    }
}

/// All `(i, o, w)` lane splits with each part >= 1 summing to `lanes`,
/// in lexicographic order.
pub fn lane_splits(lanes: u64) -> Vec<(u64, u64, u64)> {
    let mut out = Vec::new();
    for i in 1..lanes {
        for o in 1..lanes - i {
            out.push((i, o, lanes - i - o));
        }
    }
    out
}

struct Bounds {
    max_m: u64,
    max_n: u64,
    max_dw: u64,
    max_r: u64,
    max_c: u64,
}

fn bounds(workload: &Workload) -> Bounds {
    let mut b = Bounds {
        max_m: 1,
        max_n: 1,
        max_dw: 0,
        max_r: 1,
        max_c: 1,
    };
    for (_, s) in workload.compute_layers() {
        match s.kind {
            ConvKind::Standard => {
                b.max_m = b.max_m.max(s.m);
                b.max_n = b.max_n.max(s.n);
            }
            ConvKind::Depthwise => b.max_dw = b.max_dw.max(s.m),
        }
        b.max_r = b.max_r.max(s.r);
        b.max_c = b.max_c.max(s.c);
    }
    b
}

fn fits_bram(fpga: &FpgaSpec, workload: &Workload, design: &AcceleratorDesign, kind: ConvKind) -> bool {
    workload
        .compute_layers()
        .filter(|(_, s)| s.kind == kind)
        .all(|(l, s)| buffer_blocks(fpga, design, kind, s.k, &l.widths).total <= fpga.bram_blocks)
}

fn tm_d_candidates(fpga: &FpgaSpec, b: &Bounds) -> Vec<u64> {
    if b.max_dw == 0 {
        return vec![0];
    }
    let cap = b.max_dw.min(fpga.dsp_total.saturating_sub(1));
    if cap == 0 {
        return Vec::new();
    }
    if cap <= 64 {
        return (1..=cap).collect();
    }
    let mut set: BTreeSet<u64> = (1..8)
        .map(|j| fpga.dsp_total * j / 8)
        .filter(|&v| v >= 1 && v <= cap)
        .collect();
    set.insert(cap);
    set.into_iter().collect()
}

/// `(tm, tn)` pairs for a given depthwise share and tile size.
fn tm_tn_pairs(fpga: &FpgaSpec, workload: &Workload, b: &Bounds, tm_d: u64, tr: u64, tc: u64) -> Vec<(u64, u64)> {
    let budget = fpga.dsp_total.saturating_sub(tm_d);
    if budget == 0 {
        return Vec::new();
    }
    let max_tm = b.max_m.min(budget);
    let feasible = |tm: u64, tn: u64| {
        let d = AcceleratorDesign {
            tm,
            tn,
            tr,
            tc,
            tm_d,
            ib_bits: 1,
            ob_bits: 1,
            wb_bits: 1,
        };
        fits_bram(fpga, workload, &d, ConvKind::Standard)
    };
    let total: u64 = (1..=max_tm).map(|tm| b.max_n.min(budget / tm)).sum();
    if total <= EXHAUSTIVE_PAIRS {
        let mut out = Vec::new();
        for tm in 1..=max_tm {
            for tn in 1..=b.max_n.min(budget / tm) {
                if feasible(tm, tn) {
                    out.push((tm, tn));
                }
            }
        }
        return out;
    }
    // BRAM use grows with both tm and tn, so the largest feasible partner
    // is found by bisection.
    let largest = |limit: u64, ok: &dyn Fn(u64) -> bool| -> Option<u64> {
        if limit == 0 || !ok(1) {
            return None;
        }
        let (mut lo, mut hi) = (1, limit);
        while lo < hi {
            let mid = (lo + hi).div_ceil(2);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        Some(lo)
    };
    let mut set = BTreeSet::new();
    for tm in 1..=max_tm {
        if let Some(tn) = largest(b.max_n.min(budget / tm), &|tn| feasible(tm, tn)) {
            set.insert((tm, tn));
        }
    }
    for tn in 1..=b.max_n.min(budget) {
        if let Some(tm) = largest(b.max_m.min(budget / tn), &|tm| feasible(tm, tn)) {
            set.insert((tm, tn));
        }
    }
    set.into_iter().collect()
}

/// Every tiling the optimizer considers for this workload.
pub fn candidate_tilings(fpga: &FpgaSpec, workload: &Workload) -> Result<Vec<Tiling>> {
    fpga.validate()?;
    let b = bounds(workload);
    let tm_ds = tm_d_candidates(fpga, &b);
    if tm_ds.is_empty() {
        return Err(Error::NoFeasibleDesign(format!(
            "dsp: {} DSPs cannot host both a conv engine and a depthwise engine",
            fpga.dsp_total
        )));
    }
    let mut out = Vec::new();
    for tr in tile_candidates(b.max_r) {
        for tc in tile_candidates(b.max_c) {
            for &tm_d in &tm_ds {
                if tm_d > 0 {
                    let d = AcceleratorDesign {
                        tm: 1,
                        tn: 1,
                        tr,
                        tc,
                        tm_d,
                        ib_bits: 1,
                        ob_bits: 1,
                        wb_bits: 1,
                    };
                    if !fits_bram(fpga, workload, &d, ConvKind::Depthwise) {
                        continue;
                    }
                }
                for (tm, tn) in tm_tn_pairs(fpga, workload, &b, tm_d, tr, tc) {
                    out.push(Tiling { tm, tn, tm_d, tr, tc });
                }
            }
        }
    }
    Ok(out)
}

/// Per-layer quantities of one tiling that do not depend on lanes.
struct LayerCost {
    outer: u64,
    input_trips: u64,
    t_comp: u64,
    ifm_bits: u64,
    w_bits: u64,
    ofm_bits: u64,
}

fn layer_costs(workload: &Workload, t: &Tiling) -> Option<Vec<LayerCost>> {
    let mut out = Vec::new();
    for (layer, shape) in workload.compute_layers() {
        let (tm, tn) = match shape.kind {
            ConvKind::Standard => (t.tm, t.tn),
            ConvKind::Depthwise => (t.tm_d, 1),
        };
        let m = shape.m.checked_sub(layer.effects.cut_out).filter(|&v| v > 0)?;
        let n = match shape.kind {
            ConvKind::Standard => shape.n.checked_sub(layer.effects.cut_in).filter(|&v| v > 0)?,
            ConvKind::Depthwise => 1,
        };
        let kk = shape.k * shape.k;
        if layer.effects.pattern_zeros >= kk {
            return None;
        }
        let pixels = t.tr * t.tc;
        let w = &layer.widths;
        out.push(LayerCost {
            outer: shape.r.div_ceil(t.tr) * shape.c.div_ceil(t.tc) * m.div_ceil(tm),
            input_trips: n.div_ceil(tn),
            t_comp: (kk - layer.effects.pattern_zeros) * pixels,
            ifm_bits: tn * pixels * w.bit_i as u64,
            w_bits: tm * tn * kk * w.bit_w as u64,
            ofm_bits: tm * pixels * w.bit_o as u64,
        });
    }
    Some(out)
}

/// Latency with transfers taking zero time.
fn lower_bound(costs: &[LayerCost]) -> u64 {
    costs
        .iter()
        .map(|c| c.outer * c.input_trips * c.t_comp + c.t_comp)
        .sum()
}

fn eval_split(costs: &[LayerCost], (i, o, w): (u64, u64, u64), word: u64) -> u64 {
    costs
        .iter()
        .map(|c| {
            let t_i = c.ifm_bits.div_ceil(i * word);
            let t_w = c.w_bits.div_ceil(w * word);
            let t_o = c.ofm_bits.div_ceil(o * word);
            let lat1 = c.t_comp.max(t_i).max(t_w);
            let lat2 = (c.input_trips * lat1).max(t_o);
            c.outer * lat2 + t_o + lat1
        })
        .sum()
}

/// Best design for each of the `n` best tilings, best first, with total
/// cycles. Ties break on `(latency, tm, tn, tm_d, tr, tc, lanes)`.
pub fn top_designs(fpga: &FpgaSpec, workload: &Workload, n: usize) -> Result<Vec<(AcceleratorDesign, u64)>> {
    fpga.validate()?;
    let lanes = fpga.lanes();
    if lanes < 3 {
        return Err(Error::NoFeasibleDesign(format!(
            "bandwidth: {lanes} lanes cannot feed three streams"
        )));
    }
    let fixed: u64 = workload
        .layers
        .iter()
        .filter(|l| l.shape.is_none())
        .map(|l| l.fixed_cycles)
        .sum();
    let word = fpga.compute_word_bits;

    if workload.compute_layers().next().is_none() {
        let share = lanes / 3;
        let design = AcceleratorDesign::with_lanes(1, 1, 1, 1, 0, (lanes - 2 * share, share, share), word);
        return Ok(vec![(design, fixed)]);
    }

    let tilings = candidate_tilings(fpga, workload)?;
    if tilings.is_empty() {
        return Err(Error::NoFeasibleDesign(format!(
            "bram: no tiling fits {} blocks of {} bits",
            fpga.bram_blocks, fpga.bram_bits_per_block
        )));
    }
    let mut scored: Vec<(u64, Tiling)> = tilings
        .into_par_iter()
        .filter_map(|t| layer_costs(workload, &t).map(|c| (lower_bound(&c), t)))
        .collect();
    if scored.is_empty() {
        return Err(Error::InvalidCompression("workload leaves no channels".into()));
    }
    scored.sort_unstable();

    let splits = lane_splits(lanes);
    type Key = (u64, Tiling, (u64, u64, u64));
    let mut kept: Vec<Key> = Vec::with_capacity(n + 1);
    // Tilings are visited in chunks so the pruning bound stays current
    // while each chunk is scored in parallel.
    for chunk in scored.chunks(256) {
        if kept.len() >= n && chunk[0].0 > kept[n - 1].0 {
            break;
        }
        let results: Vec<Key> = chunk
            .par_iter()
            .map(|(_, t)| {
                let costs = layer_costs(workload, t).expect("scored tilings are valid");
                splits
                    .iter()
                    .map(|&s| (eval_split(&costs, s, word), *t, s))
                    .min_by_key(|&(lat, _, s)| (lat, s))
                    .expect("at least one lane split")
            })
            .collect();
        for key in results {
            let pos = kept.partition_point(|k| *k < key);
            if pos < n {
                kept.insert(pos, key);
                kept.truncate(n);
            }
        }
    }
    Ok(kept
        .into_iter()
        .map(|(lat, t, split)| {
            (
                AcceleratorDesign::with_lanes(t.tm, t.tn, t.tr, t.tc, t.tm_d, split, word),
                lat + fixed,
            )
        })
        .collect())
}

/// Finds the latency-minimal design; returns it with its total cycles.
pub fn optimize_design(fpga: &FpgaSpec, workload: &Workload) -> Result<(AcceleratorDesign, u64)> {
    Ok(top_designs(fpga, workload, 1)?.remove(0))
}
