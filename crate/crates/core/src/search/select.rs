use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{reward, Backbone, RewardSpec};
use crate::error::Result;
use crate::netzoo::{stable_seed, NetworkArch};
use crate::perfmodel::FpgaSpec;
use crate::searchspace::SpaceCaps;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub t_constraint_ms: f64,
    pub n_samples: usize,
    pub top_k: usize,
    pub alpha: f64,
    pub a_min_frac: f64,
    pub t_min_frac: f64,
    pub seed: u64,
    pub caps: SpaceCaps,
}

/// Sampled latency spread of one zoo model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneStats {
    pub model: String,
    pub a_ori: f64,
    pub baseline_ms: Option<f64>,
    pub min_ms: Option<f64>,
    pub max_ms: Option<f64>,
    pub avg_ms: Option<f64>,
    /// Minimum sampled latency meets the constraint.
    pub satisfies: bool,
    /// Draws whose design fit the resource budgets.
    pub valid_samples: usize,
    pub score: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Selection {
    /// Best first, at most `top_k`.
    pub ranked: Vec<BackboneStats>,
    /// Survivors beyond `top_k`.
    pub runners_up: Vec<BackboneStats>,
    pub excluded: Vec<BackboneStats>,
    #[serde(skip)]
    pub backbones: Vec<Backbone>,
}

impl Selection {
    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }
}

fn sample_stats(bb: &Backbone, fpga: &FpgaSpec, p: &SelectionParams) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ stable_seed(bb.name()));
    let mut lats = Vec::with_capacity(p.n_samples);
    for draw in 0..p.n_samples {
        // The first draw is the unmodified backbone on its base design.
        let choices = if draw == 0 {
            vec![0; bb.space.dims.len()]
        } else {
            bb.space.sample_uniform(&mut rng)
        };
        if let Some(l) = bb.latency_ms(fpga, &bb.space.config(&choices)?)? {
            lats.push(l);
        }
    }
    Ok(lats)
}

/// Drops every model whose fastest sampled configuration misses the
/// constraint, then ranks the rest by the reward of their own accuracy
/// (normalized against the best in the zoo) at their fastest latency.
pub fn monte_carlo_select(nets: &[NetworkArch], fpga: &FpgaSpec, p: &SelectionParams) -> Result<Selection> {
    let a_best = nets.iter().map(|n| n.baseline_accuracy()).fold(0.0, f64::max);
    let spec = RewardSpec::for_backbone(p.alpha, p.t_constraint_ms, a_best, p.a_min_frac, p.t_min_frac)?;
    let mut survivors: Vec<(BackboneStats, Backbone)> = Vec::new();
    let mut excluded = Vec::new();
    for net in nets {
        let mut stats = BackboneStats {
            model: net.name().to_string(),
            a_ori: net.baseline_accuracy(),
            baseline_ms: None,
            min_ms: None,
            max_ms: None,
            avg_ms: None,
            satisfies: false,
            valid_samples: 0,
            score: None,
            note: None,
        };
        let bb = match Backbone::prepare(net, fpga, &p.caps) {
            Ok(bb) => bb,
            Err(e) => {
                stats.note = Some(e.to_string());
                excluded.push(stats);
                continue;
            }
        };
        stats.baseline_ms = Some(bb.baseline_ms);
        let lats = sample_stats(&bb, fpga, p)?;
        stats.valid_samples = lats.len();
        if !lats.is_empty() {
            let min = lats.iter().copied().fold(f64::INFINITY, f64::min);
            stats.min_ms = Some(min);
            stats.max_ms = Some(lats.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            stats.avg_ms = Some(lats.iter().sum::<f64>() / lats.len() as f64);
            stats.satisfies = min <= p.t_constraint_ms;
        }
        if stats.satisfies {
            stats.score = Some(reward(Some(stats.a_ori), stats.min_ms.expect("sampled"), &spec)?);
            survivors.push((stats, bb));
        } else {
            stats.note = Some(format!("minimum sampled latency exceeds {} ms", p.t_constraint_ms));
            excluded.push(stats);
        }
    }
    survivors.sort_by(|(a, _), (b, _)| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then(a.min_ms.partial_cmp(&b.min_ms).expect("latencies are finite"))
            .then_with(|| a.model.cmp(&b.model))
    });
    let mut sel = Selection {
        excluded,
        ..Selection::default()
    };
    for (i, (stats, bb)) in survivors.into_iter().enumerate() {
        if i < p.top_k {
            sel.ranked.push(stats);
            sel.backbones.push(bb);
        } else {
            sel.runners_up.push(stats);
        }
    }
    if sel.is_empty() {
        log::warn!("no feasible backbone under {} ms", p.t_constraint_ms);
    }
    Ok(sel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netzoo::{builtin_network, BuiltinNet};

    fn params(t: f64) -> SelectionParams {
        SelectionParams {
            t_constraint_ms: t,
            n_samples: 100,
            top_k: 2,
            alpha: 0.7,
            a_min_frac: 0.5,
            t_min_frac: 0.5,
            seed: 0,
            caps: SpaceCaps::default(),
        }
    }

    #[test]
    fn fast_model_selected_slow_pruned() {
        let fpga = FpgaSpec::default();
        let tiny = builtin_network(BuiltinNet::TinyNet).unwrap();
        let base = Backbone::prepare(&tiny, &fpga, &SpaceCaps::default())
            .unwrap()
            .baseline_ms;
        let sel = monte_carlo_select(std::slice::from_ref(&tiny), &fpga, &params(base)).unwrap();
        assert_eq!(sel.ranked.len(), 1);
        assert!(sel.ranked[0].min_ms.unwrap() <= base);
        assert_eq!(sel.ranked[0].valid_samples, 100);

        let sel = monte_carlo_select(std::slice::from_ref(&tiny), &fpga, &params(base * 1e-3)).unwrap();
        assert!(sel.is_empty());
        assert_eq!(sel.excluded.len(), 1);
    }
}
