use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{EvalRequest, EvalResponse, Evaluator};
use crate::compress::{apply_pattern, assign_patterns, quantize, select_library, FixedPointFormat};
use crate::error::{Error, Result};
use crate::netzoo::NetworkArch;
use crate::searchspace::CompressionConfig;

/// Weights of the surrogate accuracy penalty terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateCoefficients {
    pub pruned_energy: f64,
    pub quant_error: f64,
    pub cut_fraction: f64,
    /// Accuracy floor as a fraction of the baseline.
    pub floor: f64,
}

impl Default for SurrogateCoefficients {
    fn default() -> Self {
        Self {
            pruned_energy: 0.05,
            quant_error: 0.1,
            cut_fraction: 0.15,
            floor: 0.5,
        }
    }
}

/// Compression measured on the uncompressed weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompressionStats {
    /// Weight energy removed by patterns over total conv weight energy.
    pub pruned_energy_frac: f64,
    /// Largest per-layer `max |w - q(w)| / max |w|`.
    pub quant_error_ratio: f64,
    /// Conv weights removed by channel cuts over all conv weights.
    pub cut_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum CacheKey {
    Pattern {
        model: String,
        op: usize,
        pat_c: usize,
        pat_n: usize,
    },
    Quant {
        model: String,
        op: usize,
        int_bits: u32,
        frac: u32,
    },
}

/// `A_ori - c1 * pruned - c2 * quant - c3 * cut`, clamped to
/// `[floor * A_ori, A_ori]`. Expansion costs nothing.
///
/// Per-technique statistics are each taken against the original weights,
/// so they are independent of application order and cacheable.
pub struct SurrogateEvaluator {
    models: HashMap<String, NetworkArch>,
    coeffs: SurrogateCoefficients,
    cache: Mutex<HashMap<CacheKey, f64>>,
}

impl SurrogateEvaluator {
    pub fn new(models: Vec<NetworkArch>) -> Self {
        Self::with_coefficients(models, SurrogateCoefficients::default())
    }

    pub fn with_coefficients(models: Vec<NetworkArch>, coeffs: SurrogateCoefficients) -> Self {
        Self {
            models: models.into_iter().map(|m| (m.name().to_string(), m)).collect(),
            coeffs,
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn cached(&self, key: CacheKey, compute: impl FnOnce() -> Result<f64>) -> Result<f64> {
        if let Some(&v) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(v);
        }
        let v = compute()?;
        self.cache.lock().expect("cache lock").insert(key, v);
        Ok(v)
    }

    pub fn stats(&self, config: &CompressionConfig) -> Result<CompressionStats> {
        let net = self
            .models
            .get(&config.model)
            .ok_or_else(|| Error::UnknownNetwork(config.model.clone()))?;
        let compute_ops = net.compute_ops();
        let weight_of = |op: usize| {
            net.ops()
                .get(op)
                .filter(|o| o.kind.is_compute())
                .and_then(|o| o.weights.as_ref())
                .ok_or_else(|| Error::Contract(format!("op {op} of `{}` is not a convolution", config.model)))
        };
        let total_energy: f64 = compute_ops
            .iter()
            .map(|&i| weight_of(i).map(|w| w.iter().map(|&v| (v as f64).powi(2)).sum::<f64>()))
            .sum::<Result<f64>>()?;
        let total_count: usize = compute_ops.iter().map(|&i| net.ops()[i].weight_count()).sum();

        let mut pruned = 0.0;
        let mut quant_ratio: f64 = 0.0;
        for choice in &config.layers {
            let w = weight_of(choice.op_index)?;
            let k = net.ops()[choice.op_index].k;
            if let Some(p) = choice.pattern {
                let key = CacheKey::Pattern {
                    model: config.model.clone(),
                    op: choice.op_index,
                    pat_c: p.pat_c,
                    pat_n: p.pat_n,
                };
                pruned += self.cached(key, || {
                    let lib = select_library(w, k, p.pat_c, p.pat_n)?;
                    let assignment = assign_patterns(w, &lib)?;
                    let kept = apply_pattern(w, &lib, &assignment)?;
                    let before: f64 = w.iter().map(|&v| (v as f64).powi(2)).sum();
                    let after: f64 = kept.iter().map(|&v| (v as f64).powi(2)).sum();
                    Ok(before - after)
                })?;
            }
            if let Some(frac) = choice.quant_frac {
                let key = CacheKey::Quant {
                    model: config.model.clone(),
                    op: choice.op_index,
                    int_bits: choice.int_bits,
                    frac,
                };
                quant_ratio = quant_ratio.max(self.cached(key, || {
                    let fmt = FixedPointFormat::new(choice.int_bits, frac)?;
                    let (_, err) = quantize(w, fmt);
                    let scale = w.iter().fold(0.0f64, |m, &v| m.max((v as f64).abs()));
                    Ok(if scale > 0.0 { err / scale } else { 0.0 })
                })?);
            }
        }

        let mut removed = 0usize;
        for cut in config.cuts.iter().filter(|c| c.cut > 0) {
            let node = net
                .node(&cut.node)
                .ok_or_else(|| Error::Contract(format!("no node `{}` in `{}`", cut.node, config.model)))?;
            if cut.cut >= node.channels {
                return Err(Error::InvalidCompression(format!(
                    "cut {} on `{}` with {} channels",
                    cut.cut, cut.node, node.channels
                )));
            }
            for i in net.producers(&cut.node).into_iter().chain(net.consumers(&cut.node)) {
                let w = weight_of(i)?;
                let per_channel = if net.ops()[i].dst == cut.node {
                    w.len() / w.shape()[0]
                } else {
                    w.len() / w.shape()[1]
                };
                removed += cut.cut * per_channel;
            }
        }

        Ok(CompressionStats {
            pruned_energy_frac: if total_energy > 0.0 { pruned / total_energy } else { 0.0 },
            quant_error_ratio: quant_ratio,
            cut_frac: if total_count > 0 {
                removed as f64 / total_count as f64
            } else {
                0.0
            },
        })
    }

    pub fn accuracy(&self, config: &CompressionConfig) -> Result<f64> {
        let a_ori = self
            .models
            .get(&config.model)
            .ok_or_else(|| Error::UnknownNetwork(config.model.clone()))?
            .baseline_accuracy();
        let s = self.stats(config)?;
        let c = &self.coeffs;
        let acc = a_ori
            - c.pruned_energy * s.pruned_energy_frac
            - c.quant_error * s.quant_error_ratio
            - c.cut_fraction * s.cut_frac;
        Ok(acc.clamp(c.floor * a_ori, a_ori))
    }
}

impl Evaluator for SurrogateEvaluator {
    fn evaluate(&self, request: &EvalRequest) -> Result<EvalResponse> {
        Ok(match self.accuracy(&request.config) {
            Ok(a) => EvalResponse::ok(a),
            Err(e) => EvalResponse::error(e.to_string()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netzoo::{builtin_network, BuiltinNet};
    use crate::perfmodel::AcceleratorDesign;
    use crate::searchspace::{LayerChoice, NodeCut, PatternChoice};

    fn identity(net: &NetworkArch) -> CompressionConfig {
        CompressionConfig {
            model: net.name().into(),
            layers: net
                .compute_ops()
                .into_iter()
                .map(|op_index| LayerChoice {
                    op_index,
                    pattern: None,
                    quant_frac: None,
                    int_bits: 1,
                    exp: 0,
                })
                .collect(),
            cuts: vec![],
            design: AcceleratorDesign::with_lanes(4, 4, 8, 8, 0, (10, 11, 11), 16),
        }
    }

    #[test]
    fn identity_is_baseline() {
        let net = builtin_network(BuiltinNet::TinyNet).unwrap();
        let s = SurrogateEvaluator::new(vec![net.clone()]);
        assert_eq!(s.accuracy(&identity(&net)).unwrap(), net.baseline_accuracy());
    }

    #[test]
    fn more_pruning_lowers_accuracy() {
        let net = builtin_network(BuiltinNet::TinyNet).unwrap();
        let s = SurrogateEvaluator::new(vec![net.clone()]);
        let mut prev = s.accuracy(&identity(&net)).unwrap();
        for pat_c in 1..=4 {
            let mut cfg = identity(&net);
            cfg.layers[0].pattern = Some(PatternChoice { pat_c, pat_n: 2 });
            let acc = s.accuracy(&cfg).unwrap();
            assert!(acc < prev, "pat_c {pat_c}: {acc} !< {prev}");
            prev = acc;
        }
    }

    #[test]
    fn cut_and_quant_penalized() {
        let net = builtin_network(BuiltinNet::TinyNet).unwrap();
        let s = SurrogateEvaluator::new(vec![net.clone()]);
        let mut cfg = identity(&net);
        cfg.cuts.push(NodeCut {
            node: "conv1".into(),
            cut: 1,
        });
        let stats = s.stats(&cfg).unwrap();
        // conv1 loses 1 of 4 filters, conv2 1 of 4 input slices: 27 + 36 of 108 + 144.
        assert!((stats.cut_frac - 63.0 / 252.0).abs() < 1e-12);
        cfg.layers[1].quant_frac = Some(2);
        let q = s.stats(&cfg).unwrap().quant_error_ratio;
        assert!(q > 0.0 && q < 0.25);
    }

    #[test]
    fn unknown_model_is_an_error_response() {
        let s = SurrogateEvaluator::new(vec![]);
        let net = builtin_network(BuiltinNet::TinyNet).unwrap();
        let resp = s.evaluate(&EvalRequest::new(&identity(&net), 10)).unwrap();
        assert_eq!(resp.status, super::super::EvalStatus::Error);
    }
}
