use std::sync::Arc;

use ndarray::Axis;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netzoo::{NetworkArch, OpKind};

/// Which channels a cut removes first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelRanking {
    /// Smallest L1 norm of the producing filter first; ties by index.
    L1,
    Random(u64),
}

/// Producer and consumer op indices of a node that can be cut or reordered.
pub(crate) fn chain_neighbours(net: &NetworkArch, node_id: &str) -> Result<(usize, usize)> {
    let producers = net.producers(node_id);
    let consumers = net.consumers(node_id);
    if producers.len() != 1 || consumers.len() != 1 {
        return Err(Error::topology(
            node_id,
            format!(
                "needs one producer and one consumer, found {} and {}",
                producers.len(),
                consumers.len()
            ),
        ));
    }
    let (p, c) = (producers[0], consumers[0]);
    if net.ops()[p].kind != OpKind::Conv || net.ops()[c].kind != OpKind::Conv {
        return Err(Error::topology(
            node_id,
            format!(
                "cut needs conv on both sides, found {} -> {}",
                net.ops()[p].kind.as_str(),
                net.ops()[c].kind.as_str()
            ),
        ));
    }
    Ok((p, c))
}

/// Channel indices of `node_id` in removal order.
pub fn rank_channels(net: &NetworkArch, node_id: &str, ranking: ChannelRanking) -> Result<Vec<usize>> {
    let (p, _) = chain_neighbours(net, node_id)?;
    let w = net.ops()[p].weights.as_ref().expect("conv carries weights");
    let channels = w.shape()[0];
    let mut order: Vec<usize> = (0..channels).collect();
    match ranking {
        ChannelRanking::L1 => {
            let norms: Vec<f64> = w
                .axis_iter(Axis(0))
                .map(|f| f.iter().map(|v| v.abs() as f64).sum())
                .collect();
            order.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
        }
        ChannelRanking::Random(seed) => order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
    }
    Ok(order)
}

/// Removes `cut_n` channels from `node_id`, dropping the producer's output
/// filters and the consumer's input kernels for those channels.
pub fn cut_channels(net: &NetworkArch, node_id: &str, cut_n: usize, ranking: ChannelRanking) -> Result<NetworkArch> {
    let node = net
        .node(node_id)
        .ok_or_else(|| Error::validation("cut", format!("no node `{node_id}`")))?;
    if cut_n == 0 || cut_n >= node.channels {
        return Err(Error::InvalidCompression(format!(
            "cut of {cut_n} channels on `{node_id}` with {} channels",
            node.channels
        )));
    }
    let (p, c) = chain_neighbours(net, node_id)?;
    let order = rank_channels(net, node_id, ranking)?;
    let mut keep: Vec<usize> = order[cut_n..].to_vec();
    keep.sort_unstable();

    let mut nodes = net.nodes().to_vec();
    for n in nodes.iter_mut().filter(|n| n.id == node_id) {
        n.channels = keep.len();
    }
    let mut ops = net.ops().to_vec();
    let pw = ops[p].weights.as_ref().expect("conv carries weights");
    ops[p].weights = Some(Arc::new(pw.select(Axis(0), &keep)));
    let cw = ops[c].weights.as_ref().expect("conv carries weights");
    ops[c].weights = Some(Arc::new(cw.select(Axis(1), &keep)));
    net.rebuilt(nodes, ops)
}
