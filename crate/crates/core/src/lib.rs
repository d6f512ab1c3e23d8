//! Hardware/architecture co-search for tiled FPGA convolution accelerators.
//!
//! [`perfmodel`] gives closed-form layer latency for a shared tiled engine,
//! [`bottleneck`] labels what bounds each layer, [`searchspace`] turns
//! those labels into per-layer compression choices plus hardware knobs, and
//! [`search`] explores the result with a REINFORCE controller. Accuracy of
//! a candidate comes from an [`evalbridge::Evaluator`].

pub mod bottleneck;
pub mod compress;
pub mod error;
pub mod evalbridge;
pub mod netzoo;
pub mod perfmodel;
pub mod search;
pub mod searchspace;

pub use error::{Error, Result};
pub use netzoo::{ModelZoo, NetworkArch, NodeSpec, OpKind, OperatorSpec};
pub use perfmodel::{AcceleratorDesign, DataWidths, FpgaSpec, LatencyBreakdown, LayerShape};
