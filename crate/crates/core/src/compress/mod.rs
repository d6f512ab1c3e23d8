//! Weight-level compression transforms and a reference executor.

mod channel;
mod exec;
mod expand;
mod pattern;
mod quant;

pub(crate) use channel::chain_neighbours;
pub use channel::{cut_channels, rank_channels, ChannelRanking};
pub use exec::{naive_conv, naive_conv_fixed, run_network, run_op, Scalar};
pub use expand::expand_filter;
pub use pattern::{
    apply_pattern, assign_patterns, binomial, enumerate_patterns, harmonize_tiles, kept_energy_fraction,
    select_library, PatternLibrary, PatternMask, TileHarmony, LIBRARY_CAP,
};
pub use quant::{derive_int_bits, quantize, FixedPointFormat};
