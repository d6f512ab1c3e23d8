use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimizer knobs for the policy-gradient controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    pub gamma: f64,
    pub lr: f64,
    pub batch: usize,
    /// Weight of the old baseline in its moving average.
    pub ema: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            lr: 0.05,
            batch: 5,
            ema: 0.9,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma {} outside (0, 1]", self.gamma)));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.ema) {
            return Err(Error::Config(format!("ema {} outside [0, 1)", self.ema)));
        }
        Ok(())
    }
}

/// Independent softmax policy per decision slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub logits: Vec<Vec<f64>>,
    /// `None` until the first batch arrives.
    pub baseline: Option<f64>,
    pub params: ControllerParams,
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

impl ControllerState {
    /// Uniform logits, one vector per slot.
    pub fn new(slot_sizes: &[usize], params: ControllerParams) -> Result<Self> {
        params.validate()?;
        if let Some(i) = slot_sizes.iter().position(|&s| s == 0) {
            return Err(Error::Contract(format!("slot {i} has no choices")));
        }
        Ok(Self {
            logits: slot_sizes.iter().map(|&s| vec![0.0; s]).collect(),
            baseline: None,
            params,
        })
    }

    pub fn probabilities(&self, slot: usize) -> Vec<f64> {
        softmax(&self.logits[slot])
    }

    /// One categorical draw per slot, with the log-probability of each.
    pub fn sample_actions<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<usize>, Vec<f64>) {
        self.logits
            .iter()
            .map(|l| {
                let p = softmax(l);
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = p.len() - 1;
                for (i, &pi) in p.iter().enumerate() {
                    acc += pi;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                (pick, p[pick].ln())
            })
            .unzip()
    }

    pub fn log_prob(&self, actions: &[usize]) -> f64 {
        self.logits.iter().zip(actions).map(|(l, &a)| softmax(l)[a].ln()).sum()
    }

    /// Gradient of `log pi(actions)` with respect to each slot's logits.
    pub fn grad_log_prob(&self, actions: &[usize]) -> Vec<Vec<f64>> {
        self.logits
            .iter()
            .zip(actions)
            .map(|(l, &a)| {
                let mut g: Vec<f64> = softmax(l).into_iter().map(|p| -p).collect();
                g[a] += 1.0;
                g
            })
            .collect()
    }

    /// `(1/m) sum_k sum_t gamma^(T-1-t) grad log pi(a_t) (R_k - b)` with `b`
    /// the current baseline (the batch mean before the first update).
    pub fn policy_gradient(&self, batch: &[(Vec<usize>, f64)]) -> Vec<Vec<f64>> {
        let mut grad: Vec<Vec<f64>> = self.logits.iter().map(|l| vec![0.0; l.len()]).collect();
        if batch.is_empty() {
            return grad;
        }
        let b = self.baseline.unwrap_or_else(|| mean_reward(batch));
        let slots = self.logits.len();
        let m = batch.len() as f64;
        for (actions, r) in batch {
            let advantage = r - b;
            if advantage == 0.0 {
                continue;
            }
            for (t, (g, sg)) in self.grad_log_prob(actions).into_iter().zip(grad.iter_mut()).enumerate() {
                let w = self.params.gamma.powi((slots - 1 - t) as i32) * advantage / m;
                for (acc, v) in sg.iter_mut().zip(g) {
                    *acc += w * v;
                }
            }
        }
        grad
    }

    /// One ascent step on the batch, then the baseline moves toward the
    /// batch mean.
    pub fn update_controller(&mut self, batch: &[(Vec<usize>, f64)]) {
        if batch.is_empty() {
            return;
        }
        let grad = self.policy_gradient(batch);
        for (l, g) in self.logits.iter_mut().zip(grad) {
            for (li, gi) in l.iter_mut().zip(g) {
                *li += self.params.lr * gi;
            }
        }
        let mean = mean_reward(batch);
        let e = self.params.ema;
        self.baseline = Some(match self.baseline {
            Some(b) => e * b + (1.0 - e) * mean,
            None => mean,
        });
    }
}

fn mean_reward(batch: &[(Vec<usize>, f64)]) -> f64 {
    batch.iter().map(|(_, r)| r).sum::<f64>() / batch.len() as f64
}
