use serde::{Deserialize, Serialize};

use crate::searchspace::CompressionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub config: CompressionConfig,
    pub latency_ms: f64,
    pub accuracy: f64,
}

impl ParetoPoint {
    /// No worse on both axes and better on at least one.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.latency_ms <= other.latency_ms
            && self.accuracy >= other.accuracy
            && (self.latency_ms < other.latency_ms || self.accuracy > other.accuracy)
    }
}

/// Mutually non-dominated (latency, accuracy) points, sorted by latency.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParetoSet {
    points: Vec<ParetoPoint>,
}

impl ParetoSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `point` unless an existing point dominates or ties it; drops the
    /// points it dominates. Returns whether it was kept.
    pub fn insert(&mut self, point: ParetoPoint) -> bool {
        let blocked = self
            .points
            .iter()
            .any(|p| p.dominates(&point) || (p.latency_ms == point.latency_ms && p.accuracy == point.accuracy));
        if blocked {
            return false;
        }
        self.points.retain(|p| !point.dominates(p));
        let at = self.points.partition_point(|p| p.latency_ms < point.latency_ms);
        self.points.insert(at, point);
        true
    }

    pub fn points(&self) -> &[ParetoPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn merge(&mut self, other: &ParetoSet) {
        for p in &other.points {
            self.insert(p.clone());
        }
    }

    pub fn is_non_dominated(&self) -> bool {
        self.points
            .iter()
            .enumerate()
            .all(|(i, a)| self.points.iter().enumerate().all(|(j, b)| i == j || !a.dominates(b)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perfmodel::AcceleratorDesign;

    fn pt(lat: f64, acc: f64) -> ParetoPoint {
        ParetoPoint {
            config: CompressionConfig {
                model: "m".into(),
                layers: vec![],
                cuts: vec![],
                design: AcceleratorDesign::with_lanes(1, 1, 1, 1, 0, (1, 1, 1), 16),
            },
            latency_ms: lat,
            accuracy: acc,
        }
    }

    #[test]
    fn keeps_frontier() {
        let mut s = ParetoSet::new();
        assert!(s.insert(pt(2.0, 0.7)));
        assert!(s.insert(pt(1.0, 0.6)));
        assert!(!s.insert(pt(2.5, 0.65)));
        assert!(!s.insert(pt(2.0, 0.7)));
        assert!(s.insert(pt(1.5, 0.75)));
        let lats: Vec<f64> = s.points().iter().map(|p| p.latency_ms).collect();
        assert_eq!(lats, vec![1.0, 1.5]);
        assert!(s.is_non_dominated());
    }
}
