//! Backbone screening and policy-gradient co-search over a [`JointSpace`].
//!
//! [`monte_carlo_select`] screens the zoo by sampled latency, then
//! [`run_search`] runs one REINFORCE search per surviving backbone.
//! [`exhaustive_search`] enumerates a small space outright and serves as the
//! reference optimum.

mod controller;
mod pareto;
mod reward;
mod select;

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bottleneck::{analyze_network, NetworkAnalysis};
use crate::error::{Error, Result};
use crate::evalbridge::{EvalRequest, Evaluator, EvaluatorSpec};
use crate::netzoo::NetworkArch;
use crate::perfmodel::{network_latency, optimize_design, AcceleratorDesign, FpgaSpec, Workload};
use crate::searchspace::{build_space, CompressionConfig, JointSpace, SpaceCaps};

pub use controller::{ControllerParams, ControllerState};
pub use pareto::{ParetoPoint, ParetoSet};
pub use reward::{reward, RewardSpec};
pub use select::{monte_carlo_select, BackboneStats, Selection, SelectionParams};

/// Largest space [`exhaustive_search`] will enumerate by default.
pub const EXHAUSTIVE_CAP: u128 = 100_000;

/// Everything a search run needs besides the zoo, FPGA and evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub alpha: f64,
    /// Fine-tuning budget in data batches, passed to the evaluator.
    pub beta: u32,
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    pub ema: f64,
    pub episodes_max: usize,
    pub t_constraint_ms: Option<f64>,
    pub top_k: usize,
    pub seed: u64,
    pub mc_samples: usize,
    pub a_min_frac: f64,
    pub t_min_frac: f64,
    pub evaluator: EvaluatorSpec,
    pub caps: SpaceCaps,
}

impl Default for SearchConfig {
    fn default() -> Self {
        let c = ControllerParams::default();
        Self {
            alpha: 0.7,
            beta: 10,
            gamma: c.gamma,
            lr: c.lr,
            batch: c.batch,
            ema: c.ema,
            episodes_max: 2000,
            t_constraint_ms: None,
            top_k: 1,
            seed: 0,
            mc_samples: 100,
            a_min_frac: 0.5,
            t_min_frac: 0.5,
            evaluator: EvaluatorSpec::Surrogate,
            caps: SpaceCaps::default(),
        }
    }
}

impl SearchConfig {
    pub fn controller(&self) -> ControllerParams {
        ControllerParams {
            gamma: self.gamma,
            lr: self.lr,
            batch: self.batch,
            ema: self.ema,
        }
    }

    pub fn t_constraint(&self) -> Result<f64> {
        match self.t_constraint_ms {
            Some(t) if t.is_finite() && t > 0.0 => Ok(t),
            Some(t) => Err(Error::Config(format!("latency constraint {t} ms must be positive"))),
            None => Err(Error::Config("no latency constraint given".into())),
        }
    }

    pub fn reward_spec(&self, a_ori: f64) -> Result<RewardSpec> {
        RewardSpec::for_backbone(
            self.alpha,
            self.t_constraint()?,
            a_ori,
            self.a_min_frac,
            self.t_min_frac,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.controller().validate()?;
        self.t_constraint()?;
        if self.top_k == 0 || self.mc_samples == 0 {
            return Err(Error::Config("top_k and mc_samples must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.a_min_frac) || !(0.0..1.0).contains(&self.t_min_frac) {
            return Err(Error::Config("a_min_frac and t_min_frac must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A zoo model with its optimized base design and search space.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub net: NetworkArch,
    pub design: AcceleratorDesign,
    pub baseline_ms: f64,
    pub analysis: NetworkAnalysis,
    pub space: JointSpace,
}

impl Backbone {
    pub fn prepare(net: &NetworkArch, fpga: &FpgaSpec, caps: &SpaceCaps) -> Result<Self> {
        let workload = Workload::baseline(net);
        let (design, _) = optimize_design(fpga, &workload)?;
        Self::with_design(net, fpga, design, caps)
    }

    pub fn with_design(
        net: &NetworkArch,
        fpga: &FpgaSpec,
        design: AcceleratorDesign,
        caps: &SpaceCaps,
    ) -> Result<Self> {
        let analysis = analyze_network(fpga, &design, &Workload::baseline(net))?;
        let space = build_space(net, fpga, &design, &analysis, caps)?;
        Ok(Self {
            net: net.clone(),
            design,
            baseline_ms: analysis.total_ms,
            analysis,
            space,
        })
    }

    pub fn name(&self) -> &str {
        self.net.name()
    }

    /// Latency of `config`, or `None` when its design breaks a resource
    /// budget for some layer.
    pub fn latency_ms(&self, fpga: &FpgaSpec, config: &CompressionConfig) -> Result<Option<f64>> {
        match network_latency(fpga, &config.design, &self.space.workload(config)) {
            Ok(l) => Ok(Some(l.total_ms)),
            Err(Error::DesignInfeasible { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Runs the evaluator with a fine-tuning budget of `beta` batches.
pub fn fine_tune_proxy(config: &CompressionConfig, evaluator: &dyn Evaluator, beta: u32) -> Result<f64> {
    evaluator.evaluate(&EvalRequest::new(config, beta))?.into_accuracy()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub backbone: String,
    pub episode: usize,
    pub actions: Vec<usize>,
    /// Twice the constraint when the design breaks a resource budget.
    pub latency_ms: f64,
    /// Absent when over the constraint or when the evaluator failed.
    pub accuracy: Option<f64>,
    pub reward: f64,
    pub feasible: bool,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestConfig {
    pub model: String,
    pub config: CompressionConfig,
    pub latency_ms: f64,
    pub accuracy: f64,
    pub reward: f64,
}

impl BestConfig {
    /// Higher accuracy first, then lower latency.
    fn better_than(&self, other: &BestConfig) -> bool {
        self.accuracy > other.accuracy || (self.accuracy == other.accuracy && self.latency_ms < other.latency_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneReport {
    pub model: String,
    pub a_ori: f64,
    pub baseline_ms: f64,
    pub cardinality: u128,
    pub episodes: usize,
    pub distinct_evaluated: usize,
    pub best: Option<BestConfig>,
    /// Highest reward seen in any episode, feasible or not.
    pub best_reward: f64,
    pub best_reward_actions: Vec<usize>,
    pub pareto: ParetoSet,
    pub controller: ControllerState,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub backbones: Vec<BackboneReport>,
    pub trace: Vec<Episode>,
    pub pareto: ParetoSet,
    pub best: Option<BestConfig>,
}

#[derive(Debug, Clone)]
struct PointResult {
    config: CompressionConfig,
    latency_ms: f64,
    accuracy: Option<f64>,
    reward: f64,
    feasible: bool,
    failed: bool,
}

fn evaluate_point(
    bb: &Backbone,
    fpga: &FpgaSpec,
    spec: &RewardSpec,
    evaluator: &dyn Evaluator,
    beta: u32,
    choices: &[usize],
) -> Result<PointResult> {
    let config = bb.space.config(choices)?;
    let t = spec.t_constraint_ms;
    let latency_ms = bb.latency_ms(fpga, &config)?.unwrap_or(2.0 * t);
    if latency_ms > t {
        return Ok(PointResult {
            reward: reward(None, latency_ms, spec)?,
            config,
            latency_ms,
            accuracy: None,
            feasible: false,
            failed: false,
        });
    }
    match fine_tune_proxy(&config, evaluator, beta) {
        Ok(acc) => Ok(PointResult {
            reward: reward(Some(acc), latency_ms, spec)?,
            config,
            latency_ms,
            accuracy: Some(acc),
            feasible: true,
            failed: false,
        }),
        Err(e) => {
            log::warn!("evaluation of {} point {choices:?} failed: {e}", bb.name());
            Ok(PointResult {
                config,
                latency_ms,
                accuracy: None,
                reward: -1.0,
                feasible: true,
                failed: true,
            })
        }
    }
}

fn evaluate_many(
    bb: &Backbone,
    fpga: &FpgaSpec,
    spec: &RewardSpec,
    evaluator: &dyn Evaluator,
    beta: u32,
    points: &[Vec<usize>],
) -> Result<Vec<PointResult>> {
    let run = |c: &Vec<usize>| evaluate_point(bb, fpga, spec, evaluator, beta, c);
    if evaluator.supports_concurrency() {
        points.par_iter().map(run).collect()
    } else {
        points.iter().map(run).collect()
    }
}

fn search_backbone(
    bb: &Backbone,
    fpga: &FpgaSpec,
    cfg: &SearchConfig,
    evaluator: &dyn Evaluator,
    seed: u64,
    trace: &mut Vec<Episode>,
) -> Result<BackboneReport> {
    let spec = cfg.reward_spec(bb.net.baseline_accuracy())?;
    let sizes: Vec<usize> = bb.space.dims.iter().map(|d| d.size).collect();
    let mut ctrl = ControllerState::new(&sizes, cfg.controller())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache: HashMap<Vec<usize>, PointResult> = HashMap::new();
    let mut pareto = ParetoSet::new();
    let mut best: Option<BestConfig> = None;
    let mut best_reward = f64::NEG_INFINITY;
    let mut best_reward_actions = Vec::new();
    let mut fastest = f64::INFINITY;
    // A one-point space has nothing left to learn after a batch.
    let budget = if bb.space.cardinality == 1 {
        cfg.episodes_max.min(cfg.batch)
    } else {
        cfg.episodes_max
    };

    // The unmodified backbone is always a candidate, outside the trace.
    let identity = vec![0; sizes.len()];
    let r = evaluate_point(bb, fpga, &spec, evaluator, cfg.beta, &identity)?;
    fastest = fastest.min(r.latency_ms);
    if let (true, Some(acc)) = (r.feasible, r.accuracy) {
        pareto.insert(ParetoPoint {
            config: r.config.clone(),
            latency_ms: r.latency_ms,
            accuracy: acc,
        });
        best = Some(BestConfig {
            model: bb.name().to_string(),
            config: r.config.clone(),
            latency_ms: r.latency_ms,
            accuracy: acc,
            reward: r.reward,
        });
    }
    cache.insert(identity, r);

    let mut done = 0;
    while done < budget {
        let m = cfg.batch.min(budget - done);
        let actions: Vec<Vec<usize>> = (0..m).map(|_| ctrl.sample_actions(&mut rng).0).collect();
        let mut fresh: Vec<Vec<usize>> = actions.iter().filter(|a| !cache.contains_key(*a)).cloned().collect();
        fresh.sort();
        fresh.dedup();
        for (a, r) in fresh
            .iter()
            .zip(evaluate_many(bb, fpga, &spec, evaluator, cfg.beta, &fresh)?)
        {
            cache.insert(a.clone(), r);
        }

        let mut batch = Vec::with_capacity(m);
        for a in actions {
            let r = &cache[&a];
            fastest = fastest.min(r.latency_ms);
            if r.reward > best_reward {
                best_reward = r.reward;
                best_reward_actions = a.clone();
            }
            if let (true, Some(acc)) = (r.feasible, r.accuracy) {
                pareto.insert(ParetoPoint {
                    config: r.config.clone(),
                    latency_ms: r.latency_ms,
                    accuracy: acc,
                });
                let cand = BestConfig {
                    model: bb.name().to_string(),
                    config: r.config.clone(),
                    latency_ms: r.latency_ms,
                    accuracy: acc,
                    reward: r.reward,
                };
                if best.as_ref().is_none_or(|b| cand.better_than(b)) {
                    best = Some(cand);
                }
            }
            trace.push(Episode {
                backbone: bb.name().to_string(),
                episode: done,
                actions: a.clone(),
                latency_ms: r.latency_ms,
                accuracy: r.accuracy,
                reward: r.reward,
                feasible: r.feasible,
                failed: r.failed,
            });
            batch.push((a, r.reward));
            done += 1;
        }
        ctrl.update_controller(&batch);
    }

    let diagnostic = best.is_none().then(|| {
        format!(
            "no evaluated configuration of `{}` met {} ms; fastest seen {:.4} ms",
            bb.name(),
            spec.t_constraint_ms,
            fastest
        )
    });
    Ok(BackboneReport {
        model: bb.name().to_string(),
        a_ori: spec.a_ori,
        baseline_ms: bb.baseline_ms,
        cardinality: bb.space.cardinality,
        episodes: done,
        distinct_evaluated: cache.len(),
        best,
        best_reward,
        best_reward_actions,
        pareto,
        controller: ctrl,
        diagnostic,
    })
}

/// One independent policy-gradient search per backbone; the overall best
/// is the feasible configuration with the highest accuracy, then the lowest
/// latency.
pub fn run_search(
    backbones: &[Backbone],
    fpga: &FpgaSpec,
    cfg: &SearchConfig,
    evaluator: &dyn Evaluator,
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let mut trace = Vec::new();
    let mut reports = Vec::with_capacity(backbones.len());
    for (i, bb) in backbones.iter().enumerate() {
        let seed = cfg.seed.wrapping_add(i as u64);
        reports.push(search_backbone(bb, fpga, cfg, evaluator, seed, &mut trace)?);
    }
    let mut pareto = ParetoSet::new();
    let mut best: Option<BestConfig> = None;
    for r in &reports {
        pareto.merge(&r.pareto);
        if let Some(b) = &r.best {
            if best.as_ref().is_none_or(|cur| b.better_than(cur)) {
                best = Some(b.clone());
            }
        }
    }
    Ok(SearchOutcome {
        backbones: reports,
        trace,
        pareto,
        best,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveResult {
    pub index: u128,
    pub choices: Vec<usize>,
    pub config: CompressionConfig,
    pub reward: f64,
    pub latency_ms: f64,
    pub accuracy: Option<f64>,
    pub evaluated: u128,
}

/// Scores every point of the space; the lowest index wins reward ties.
pub fn exhaustive_search(
    bb: &Backbone,
    fpga: &FpgaSpec,
    spec: &RewardSpec,
    evaluator: &dyn Evaluator,
    beta: u32,
    cap: u128,
) -> Result<ExhaustiveResult> {
    let card = bb.space.cardinality;
    if card > cap {
        return Err(Error::SpaceTooLarge(format!(
            "{card} points exceed the exhaustive cap of {cap}"
        )));
    }
    let points: Vec<Vec<usize>> = (0..card).map(|i| bb.space.index_to_choices(i)).collect::<Result<_>>()?;
    let results = evaluate_many(bb, fpga, spec, evaluator, beta, &points)?;
    let (index, r) = results
        .iter()
        .enumerate()
        .fold(None::<(usize, &PointResult)>, |acc, (i, r)| match acc {
            Some((_, b)) if b.reward >= r.reward => acc,
            _ => Some((i, r)),
        })
        .expect("a space has at least one point");
    Ok(ExhaustiveResult {
        index: index as u128,
        choices: points[index].clone(),
        config: r.config.clone(),
        reward: r.reward,
        latency_ms: r.latency_ms,
        accuracy: r.accuracy,
        evaluated: card,
    })
}
