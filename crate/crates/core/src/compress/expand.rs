use std::sync::Arc;

use ndarray::{s, Array4};

use crate::error::{Error, Result};
use crate::netzoo::{OpKind, OperatorSpec};

/// Grows the kernel by `exp_n` with a zero ring and pads the input by
/// `exp_n / 2` more per side, so the op computes the same output.
pub fn expand_filter(op: &OperatorSpec, exp_n: usize) -> Result<OperatorSpec> {
    if exp_n == 0 || !exp_n.is_multiple_of(2) {
        return Err(Error::InvalidCompression(format!(
            "expansion must be even and positive, got {exp_n}"
        )));
    }
    if !op.kind.is_compute() {
        return Err(Error::InvalidCompression(format!(
            "cannot expand a {} op",
            op.kind.as_str()
        )));
    }
    if op.pattern.is_some() {
        return Err(Error::InvalidCompression("cannot expand a pattern-pruned op".into()));
    }
    let w = op.weights.as_ref().expect("compute ops carry weights");
    let (m, n, k, _) = w.dim();
    let k2 = k + exp_n;
    let half = exp_n / 2;
    let mut grown = Array4::<f32>::zeros((m, n, k2, k2));
    grown.slice_mut(s![.., .., half..half + k, half..half + k]).assign(w);
    debug_assert!(op.kind == OpKind::Conv || op.kind == OpKind::DepthwiseConv);
    Ok(OperatorSpec {
        k: k2,
        padding: op.padding + half,
        weights: Some(Arc::new(grown)),
        ..op.clone()
    })
}
