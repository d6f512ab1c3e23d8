//! Network architectures and the model zoo.
//!
//! A [`NetworkArch`] is a DAG of feature-map nodes joined by operators. Ops
//! are kept in a deterministic topological order (Kahn's algorithm, ties
//! resolved by declaration order), and every op's weight shape and output
//! dimensions are checked at construction. Networks are immutable; every
//! transform in this crate returns a new value.

mod builtin;
mod manifest;
mod reorder;

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use ndarray::Array4;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compress::PatternLibrary;
use crate::error::{Error, Result};

pub(crate) use builtin::stable_seed;
pub use builtin::{builtin_network, BuiltinNet};
pub use manifest::{parse_manifest, parse_manifest_str, write_manifest};
pub use reorder::reorder_input_channels;

/// A feature-map node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
}

impl NodeSpec {
    pub fn new(id: impl Into<String>, rows: usize, cols: usize, channels: usize) -> Self {
        Self {
            id: id.into(),
            rows,
            cols,
            channels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    #[serde(rename = "conv")]
    Conv,
    #[serde(rename = "dwconv")]
    DepthwiseConv,
    #[serde(rename = "pool")]
    Pool,
    #[serde(rename = "linear")]
    Linear,
}

impl OpKind {
    /// Ops covered by the analytical latency model.
    pub fn is_compute(self) -> bool {
        matches!(self, OpKind::Conv | OpKind::DepthwiseConv)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Conv => "conv",
            OpKind::DepthwiseConv => "dwconv",
            OpKind::Pool => "pool",
            OpKind::Linear => "linear",
        }
    }
}

/// Weights are `[out][in][k][k]`, shared by reference between network copies.
pub type Weights = Arc<Array4<f32>>;

/// An operator on the edge `src -> dst`.
#[derive(Debug, Clone)]
pub struct OperatorSpec {
    pub src: String,
    pub dst: String,
    pub kind: OpKind,
    pub k: usize,
    pub stride: usize,
    pub padding: usize,
    /// Pattern masks applied to this op's filter, if any.
    pub pattern: Option<PatternLibrary>,
    /// `None` only for pooling.
    pub weights: Option<Weights>,
    /// Explicit latency for ops outside the analytical model.
    pub fixed_latency_cycles: Option<u64>,
}

impl OperatorSpec {
    pub fn conv(
        src: impl Into<String>,
        dst: impl Into<String>,
        k: usize,
        stride: usize,
        padding: usize,
        weights: Array4<f32>,
    ) -> Self {
        Self::with_weights(src, dst, OpKind::Conv, k, stride, padding, weights)
    }

    pub fn depthwise(
        src: impl Into<String>,
        dst: impl Into<String>,
        k: usize,
        stride: usize,
        padding: usize,
        weights: Array4<f32>,
    ) -> Self {
        Self::with_weights(src, dst, OpKind::DepthwiseConv, k, stride, padding, weights)
    }

    pub fn pool(src: impl Into<String>, dst: impl Into<String>, k: usize, stride: usize, padding: usize) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            kind: OpKind::Pool,
            k,
            stride,
            padding,
            pattern: None,
            weights: None,
            fixed_latency_cycles: None,
        }
    }

    pub fn with_weights(
        src: impl Into<String>,
        dst: impl Into<String>,
        kind: OpKind,
        k: usize,
        stride: usize,
        padding: usize,
        weights: Array4<f32>,
    ) -> Self {
        Self {
            src: src.into(),
            dst: dst.into(),
            kind,
            k,
            stride,
            padding,
            pattern: None,
            weights: Some(Arc::new(weights)),
            fixed_latency_cycles: None,
        }
    }

    pub fn label(&self) -> String {
        format!("{} {} -> {}", self.kind.as_str(), self.src, self.dst)
    }

    pub fn weight_count(&self) -> usize {
        self.weights.as_ref().map_or(0, |w| w.len())
    }
}

/// A network architecture with its pre-trained parameters.
#[derive(Debug, Clone)]
pub struct NetworkArch {
    name: String,
    baseline_accuracy: f64,
    nodes: Vec<NodeSpec>,
    ops: Vec<OperatorSpec>,
}

pub(crate) fn conv_output_dim(input: usize, k: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = input + 2 * padding;
    if padded < k || stride == 0 {
        return None;
    }
    Some((padded - k) / stride + 1)
}

impl NetworkArch {
    /// Builds and validates a network; `ops` may be given in any order that
    /// admits a topological sort.
    pub fn new(
        name: impl Into<String>,
        baseline_accuracy: f64,
        nodes: Vec<NodeSpec>,
        ops: Vec<OperatorSpec>,
    ) -> Result<Self> {
        let name = name.into();
        if !(0.0..=1.0).contains(&baseline_accuracy) {
            return Err(Error::validation(
                format!("network `{name}`"),
                format!("baseline_accuracy {baseline_accuracy} outside [0, 1]"),
            ));
        }
        let mut seen = BTreeSet::new();
        for node in &nodes {
            if node.rows == 0 || node.cols == 0 || node.channels == 0 {
                return Err(Error::validation(
                    format!("node `{}`", node.id),
                    "rows, cols and channels must be >= 1",
                ));
            }
            if !seen.insert(node.id.as_str()) {
                return Err(Error::validation(format!("node `{}`", node.id), "duplicate node id"));
            }
        }
        let index: HashMap<&str, usize> = nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
        for (i, op) in ops.iter().enumerate() {
            let ctx = format!("op {i} ({})", op.label());
            let src = index
                .get(op.src.as_str())
                .map(|&s| &nodes[s])
                .ok_or_else(|| Error::validation(&ctx, format!("unknown src node `{}`", op.src)))?;
            let dst = index
                .get(op.dst.as_str())
                .map(|&d| &nodes[d])
                .ok_or_else(|| Error::validation(&ctx, format!("unknown dst node `{}`", op.dst)))?;
            validate_op(&ctx, op, src, dst)?;
        }
        let order = topological_order(&nodes, &ops, &index)
            .ok_or_else(|| Error::validation(format!("network `{name}`"), "graph has a cycle"))?;
        let mut slots: Vec<Option<OperatorSpec>> = ops.into_iter().map(Some).collect();
        let ops = order
            .into_iter()
            .map(|i| slots[i].take().expect("each op index appears once"))
            .collect();
        Ok(Self {
            name,
            baseline_accuracy,
            nodes,
            ops,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn baseline_accuracy(&self) -> f64 {
        self.baseline_accuracy
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    /// Ops in topological order.
    pub fn ops(&self) -> &[OperatorSpec] {
        &self.ops
    }

    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Indices of ops writing into `node`.
    pub fn producers(&self, node: &str) -> Vec<usize> {
        self.ops
            .iter()
            .enumerate()
            .filter(|(_, op)| op.dst == node)
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of ops reading from `node`.
    pub fn consumers(&self, node: &str) -> Vec<usize> {
        self.ops
            .iter()
            .enumerate()
            .filter(|(_, op)| op.src == node)
            .map(|(i, _)| i)
            .collect()
    }

    /// Nodes without a producer, in declaration order.
    pub fn inputs(&self) -> Vec<&NodeSpec> {
        self.nodes
            .iter()
            .filter(|n| self.ops.iter().all(|op| op.dst != n.id))
            .collect()
    }

    /// Nodes without a consumer, in declaration order.
    pub fn outputs(&self) -> Vec<&NodeSpec> {
        self.nodes
            .iter()
            .filter(|n| self.ops.iter().all(|op| op.src != n.id))
            .collect()
    }

    /// Indices of convolution and depthwise ops.
    pub fn compute_ops(&self) -> Vec<usize> {
        self.ops
            .iter()
            .enumerate()
            .filter(|(_, op)| op.kind.is_compute())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count_ops(&self, kind: OpKind) -> usize {
        self.ops.iter().filter(|op| op.kind == kind).count()
    }

    /// Sum of `m * n * k * k` over convolution (and depthwise) filters.
    pub fn conv_weight_count(&self) -> usize {
        self.ops
            .iter()
            .filter(|op| op.kind.is_compute())
            .map(OperatorSpec::weight_count)
            .sum()
    }

    /// Convolution weights plus one bias per output channel, the usual
    /// framework parameter count for conv layers.
    pub fn conv_parameter_count(&self) -> usize {
        let biases: usize = self
            .ops
            .iter()
            .filter(|op| op.kind.is_compute())
            .map(|op| self.node(&op.dst).map_or(0, |n| n.channels))
            .sum();
        self.conv_weight_count() + biases
    }

    /// SHA-256 over all weight tensors in op order.
    pub fn weight_checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for op in &self.ops {
            if let Some(w) = &op.weights {
                for v in w.iter() {
                    hasher.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Returns a copy with `ops[index]` replaced, re-validated.
    pub fn with_op(&self, index: usize, op: OperatorSpec) -> Result<Self> {
        let mut ops = self.ops.clone();
        ops[index] = op;
        Self::new(self.name.clone(), self.baseline_accuracy, self.nodes.clone(), ops)
    }

    /// Returns a copy with new nodes and ops, re-validated.
    pub fn rebuilt(&self, nodes: Vec<NodeSpec>, ops: Vec<OperatorSpec>) -> Result<Self> {
        Self::new(self.name.clone(), self.baseline_accuracy, nodes, ops)
    }
}

fn validate_op(ctx: &str, op: &OperatorSpec, src: &NodeSpec, dst: &NodeSpec) -> Result<()> {
    if op.k == 0 || op.stride == 0 {
        return Err(Error::validation(ctx, "k and stride must be >= 1"));
    }
    match op.kind {
        OpKind::Conv | OpKind::DepthwiseConv | OpKind::Pool => {
            let rows = conv_output_dim(src.rows, op.k, op.stride, op.padding);
            let cols = conv_output_dim(src.cols, op.k, op.stride, op.padding);
            if rows != Some(dst.rows) || cols != Some(dst.cols) {
                return Err(Error::validation(
                    ctx,
                    format!(
                        "dst dims {}x{} inconsistent with src {}x{}, k={}, stride={}, padding={}",
                        dst.rows, dst.cols, src.rows, src.cols, op.k, op.stride, op.padding
                    ),
                ));
            }
        }
        OpKind::Linear => {
            if op.k != 1 || op.padding != 0 || dst.rows != 1 || dst.cols != 1 {
                return Err(Error::validation(
                    ctx,
                    "linear ops need k=1, padding=0 and a 1x1 dst node",
                ));
            }
        }
    }
    let expected = match op.kind {
        OpKind::Conv => Some([dst.channels, src.channels, op.k, op.k]),
        OpKind::DepthwiseConv => {
            if src.channels != dst.channels {
                return Err(Error::validation(
                    ctx,
                    "depthwise conv needs equal src and dst channels",
                ));
            }
            Some([dst.channels, 1, op.k, op.k])
        }
        OpKind::Linear => Some([dst.channels, src.channels * src.rows * src.cols, 1, 1]),
        OpKind::Pool => {
            if src.channels != dst.channels {
                return Err(Error::validation(ctx, "pool needs equal src and dst channels"));
            }
            None
        }
    };
    match (expected, &op.weights) {
        (None, None) => Ok(()),
        (None, Some(_)) => Err(Error::validation(ctx, "pool ops carry no weights")),
        (Some(_), None) => Err(Error::validation(ctx, "missing weights")),
        (Some(shape), Some(w)) => {
            if w.shape() != shape {
                Err(Error::validation(
                    ctx,
                    format!("weights shaped {:?}, expected {:?}", w.shape(), shape),
                ))
            } else {
                Ok(())
            }
        }
    }
}

fn topological_order(nodes: &[NodeSpec], ops: &[OperatorSpec], index: &HashMap<&str, usize>) -> Option<Vec<usize>> {
    // An op is ready once every producer of its src node has been emitted.
    let mut pending_into = vec![0usize; nodes.len()];
    for op in ops {
        pending_into[index[op.dst.as_str()]] += 1;
    }
    let mut emitted = vec![false; ops.len()];
    let mut order = Vec::with_capacity(ops.len());
    while order.len() < ops.len() {
        let next = (0..ops.len()).find(|&i| !emitted[i] && pending_into[index[ops[i].src.as_str()]] == 0)?;
        emitted[next] = true;
        pending_into[index[ops[next].dst.as_str()]] -= 1;
        order.push(next);
    }
    Some(order)
}

/// A collection of networks with unique names.
#[derive(Debug, Clone, Default)]
pub struct ModelZoo {
    models: Vec<NetworkArch>,
}

impl ModelZoo {
    pub fn new(models: Vec<NetworkArch>) -> Result<Self> {
        let mut names = BTreeSet::new();
        for m in &models {
            if !names.insert(m.name()) {
                return Err(Error::validation(
                    "model zoo",
                    format!("duplicate model name `{}`", m.name()),
                ));
            }
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[NetworkArch] {
        &self.models
    }

    pub fn get(&self, name: &str) -> Option<&NetworkArch> {
        self.models.iter().find(|m| m.name() == name)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}
