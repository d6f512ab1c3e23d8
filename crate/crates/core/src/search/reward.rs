use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalization constants for the accuracy/latency reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub alpha: f64,
    pub t_constraint_ms: f64,
    pub a_min: f64,
    pub t_min_ms: f64,
    pub a_ori: f64,
}

impl RewardSpec {
    pub fn new(alpha: f64, t_constraint_ms: f64, a_min: f64, t_min_ms: f64, a_ori: f64) -> Result<Self> {
        let spec = Self {
            alpha,
            t_constraint_ms,
            a_min,
            t_min_ms,
            a_ori,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `A_min = a_min_frac * A_ori`, `T_min = t_min_frac * T`.
    pub fn for_backbone(
        alpha: f64,
        t_constraint_ms: f64,
        a_ori: f64,
        a_min_frac: f64,
        t_min_frac: f64,
    ) -> Result<Self> {
        Self::new(
            alpha,
            t_constraint_ms,
            a_min_frac * a_ori,
            t_min_frac * t_constraint_ms,
            a_ori,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.alpha, self.t_constraint_ms, self.a_min, self.t_min_ms, self.a_ori]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::Config("reward parameters must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.t_constraint_ms <= 0.0 || self.t_min_ms < 0.0 || self.t_min_ms >= self.t_constraint_ms {
            return Err(Error::Config(format!(
                "need 0 <= t_min ({}) < T ({}) with T > 0",
                self.t_min_ms, self.t_constraint_ms
            )));
        }
        if self.a_min >= self.a_ori {
            return Err(Error::Config(format!(
                "need a_min ({}) < a_ori ({})",
                self.a_min, self.a_ori
            )));
        }
        Ok(())
    }
}

/// Over the constraint the accuracy term is pinned to -1 and the latency
/// term is the raw overshoot `T - lat`; within it both terms are scaled to
/// `[-1, 1]`.
pub fn reward(acc: Option<f64>, lat_ms: f64, spec: &RewardSpec) -> Result<f64> {
    if !lat_ms.is_finite() || lat_ms <= 0.0 {
        return Err(Error::Contract(format!("latency must be positive, got {lat_ms}")));
    }
    let t = spec.t_constraint_ms;
    let (r_acc, r_lat) = if lat_ms > t {
        (-1.0, t - lat_ms)
    } else {
        let acc = acc.ok_or_else(|| Error::Contract(format!("accuracy required at latency {lat_ms} <= {t}")))?;
        (
            (acc - spec.a_min) / (spec.a_ori - spec.a_min) * 2.0 - 1.0,
            (t - lat_ms) / (t - spec.t_min_ms) * 2.0 - 1.0,
        )
    };
    Ok(spec.alpha * r_acc + (1.0 - spec.alpha) * r_lat)
}
