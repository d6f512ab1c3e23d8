use std::sync::Arc;

use ndarray::{Array4, Axis};

use super::{NetworkArch, OpKind};
use crate::error::{Error, Result};

/// Permutes the input channels of `ops[op_index]`.
///
/// New channel `j` of the op's source node is old channel `permutation[j]`.
/// The producing op's output filters and the consuming op's input kernels
/// are permuted together, so the network computes the same function.
pub fn reorder_input_channels(net: &NetworkArch, op_index: usize, permutation: &[usize]) -> Result<NetworkArch> {
    let consumer = net
        .ops()
        .get(op_index)
        .ok_or_else(|| Error::validation("reorder", format!("no op at index {op_index}")))?;
    let node = net
        .node(&consumer.src)
        .expect("validated network references existing nodes");
    if permutation.len() != node.channels {
        return Err(Error::validation(
            "reorder",
            format!(
                "permutation has {} entries, node `{}` has {} channels",
                permutation.len(),
                node.id,
                node.channels
            ),
        ));
    }
    let mut seen = vec![false; node.channels];
    for &p in permutation {
        if p >= node.channels || std::mem::replace(&mut seen[p], true) {
            return Err(Error::validation("reorder", "permutation is not a bijection"));
        }
    }
    if permutation.iter().enumerate().all(|(i, &p)| i == p) {
        return Ok(net.clone());
    }

    let producers = net.producers(&node.id);
    let consumers = net.consumers(&node.id);
    if producers.len() != 1 {
        return Err(Error::topology(
            &node.id,
            format!("needs exactly one producer, found {}", producers.len()),
        ));
    }
    if consumers.len() != 1 {
        return Err(Error::topology(
            &node.id,
            format!(
                "feeds {} consumers; reorder is only propagated along chains",
                consumers.len()
            ),
        ));
    }
    let producer = &net.ops()[producers[0]];
    if producer.kind != OpKind::Conv || consumer.kind != OpKind::Conv {
        return Err(Error::topology(
            &node.id,
            "reorder needs a conv producer and a conv consumer",
        ));
    }

    let mut ops = net.ops().to_vec();
    let pw = producer.weights.as_ref().expect("conv carries weights");
    ops[producers[0]].weights = Some(Arc::new(permute_axis(pw, Axis(0), permutation)));
    let cw = consumer.weights.as_ref().expect("conv carries weights");
    ops[op_index].weights = Some(Arc::new(permute_axis(cw, Axis(1), permutation)));
    net.rebuilt(net.nodes().to_vec(), ops)
}

pub(crate) fn permute_axis(w: &Array4<f32>, axis: Axis, permutation: &[usize]) -> Array4<f32> {
    w.select(axis, permutation)
}
