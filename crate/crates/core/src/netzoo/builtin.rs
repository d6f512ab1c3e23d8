use std::str::FromStr;

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{conv_output_dim, NetworkArch, NodeSpec, OperatorSpec};
use crate::error::{Error, Result};

/// Reference and synthetic networks shipped with the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinNet {
    /// The five convolution layers of AlexNet (224x224 input), with its pools.
    AlexNetConv,
    /// Two 3x3 convolutions on an 8x8 input.
    TinyNet,
    /// A seeded chain of `depth` convolutions.
    RandomNet { seed: u64, depth: usize },
}

impl FromStr for BuiltinNet {
    type Err = Error;

    /// Accepts `alexnet`, `tiny`, or `random:<seed>:<depth>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "alexnet" | "alexnetconv" => Ok(BuiltinNet::AlexNetConv),
            "tiny" | "tinynet" => Ok(BuiltinNet::TinyNet),
            _ => {
                let parts: Vec<&str> = lower.split(':').collect();
                match parts.as_slice() {
                    ["random" | "randomnet", seed, depth] => {
                        let seed = seed.parse().map_err(|_| Error::UnknownNetwork(s.into()))?;
                        let depth = depth.parse().map_err(|_| Error::UnknownNetwork(s.into()))?;
                        Ok(BuiltinNet::RandomNet { seed, depth })
                    }
                    _ => Err(Error::UnknownNetwork(s.into())),
                }
            }
        }
    }
}

pub(crate) fn stable_seed(label: &str) -> u64 {
    let digest = Sha256::digest(label.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Uniform `[-1, 1]` weights from a ChaCha8 stream.
pub(crate) fn seeded_uniform(shape: [usize; 4], seed: u64) -> Array4<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array4::from_shape_simple_fn(shape, || rng.gen_range(-1.0f32..=1.0))
}

pub fn builtin_network(which: BuiltinNet) -> Result<NetworkArch> {
    match which {
        BuiltinNet::AlexNetConv => alexnet(),
        BuiltinNet::TinyNet => tiny(),
        BuiltinNet::RandomNet { seed, depth } => random(seed, depth),
    }
}

struct ChainBuilder {
    name: String,
    seed: u64,
    nodes: Vec<NodeSpec>,
    ops: Vec<OperatorSpec>,
}

impl ChainBuilder {
    fn new(name: &str, seed: u64, rows: usize, cols: usize, channels: usize) -> Self {
        Self {
            name: name.into(),
            seed,
            nodes: vec![NodeSpec::new("input", rows, cols, channels)],
            ops: Vec::new(),
        }
    }

    fn last(&self) -> &NodeSpec {
        self.nodes.last().expect("chain has an input node")
    }

    fn conv(&mut self, id: &str, out: usize, k: usize, stride: usize, padding: usize) -> &mut Self {
        let src = self.last().clone();
        let rows = conv_output_dim(src.rows, k, stride, padding).expect("builtin dims valid");
        let cols = conv_output_dim(src.cols, k, stride, padding).expect("builtin dims valid");
        let seed = self.seed.wrapping_add(self.ops.len() as u64);
        let w = seeded_uniform([out, src.channels, k, k], seed);
        self.nodes.push(NodeSpec::new(id, rows, cols, out));
        self.ops.push(OperatorSpec::conv(src.id, id, k, stride, padding, w));
        self
    }

    fn pool(&mut self, id: &str, k: usize, stride: usize) -> &mut Self {
        let src = self.last().clone();
        let rows = conv_output_dim(src.rows, k, stride, 0).expect("builtin dims valid");
        let cols = conv_output_dim(src.cols, k, stride, 0).expect("builtin dims valid");
        self.nodes.push(NodeSpec::new(id, rows, cols, src.channels));
        self.ops.push(OperatorSpec::pool(src.id, id, k, stride, 0));
        self
    }

    fn build(self, accuracy: f64) -> Result<NetworkArch> {
        NetworkArch::new(self.name, accuracy, self.nodes, self.ops)
    }
}

fn alexnet() -> Result<NetworkArch> {
    // torchvision AlexNet feature extractor; top-1 0.5652.
    let mut b = ChainBuilder::new("alexnet", stable_seed("alexnet"), 224, 224, 3);
    b.conv("conv1", 64, 11, 4, 2)
        .pool("pool1", 3, 2)
        .conv("conv2", 192, 5, 1, 2)
        .pool("pool2", 3, 2)
        .conv("conv3", 384, 3, 1, 1)
        .conv("conv4", 256, 3, 1, 1)
        .conv("conv5", 256, 3, 1, 1);
    b.build(0.5652)
}

fn tiny() -> Result<NetworkArch> {
    let mut b = ChainBuilder::new("tinynet", stable_seed("tinynet"), 8, 8, 3);
    b.conv("conv1", 4, 3, 1, 1).conv("conv2", 4, 3, 1, 1);
    b.build(0.75)
}

fn random(seed: u64, depth: usize) -> Result<NetworkArch> {
    if depth == 0 {
        return Err(Error::UnknownNetwork(format!("random:{seed}:0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = rng.gen_range(6..=12);
    let channels = rng.gen_range(1..=8);
    let mut b = ChainBuilder::new(
        &format!("random_{seed}_{depth}"),
        seed.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        side,
        side,
        channels,
    );
    for layer in 0..depth {
        let k = [1, 3, 5][rng.gen_range(0..3)];
        let out = rng.gen_range(1..=8);
        b.conv(&format!("conv{}", layer + 1), out, k, 1, k / 2);
    }
    let accuracy = rng.gen_range(0.6..0.9);
    b.build(accuracy)
}
