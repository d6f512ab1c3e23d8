//! Reference executor: direct loops, fixed accumulation order.
//!
//! Tensors are `[channels][rows][cols]`. The float path converts weights to
//! `f64`; the fixed-point path scales each weight by `2^frac_bits`, rounds
//! half to even and accumulates in `i64`, so results are exact integers in
//! units of `2^-(input_frac + frac_bits)`.

use std::collections::HashMap;
use std::ops::{Add, Mul};

use ndarray::{Array3, Array4};

use crate::error::{Error, Result};
use crate::netzoo::{conv_output_dim, NetworkArch, OpKind, OperatorSpec};

/// Element type the executor can run on.
pub trait Scalar: Copy + PartialOrd + Add<Output = Self> + Mul<Output = Self> {
    fn zero() -> Self;
    /// Converts a stored weight; `frac_bits` only matters for fixed point.
    fn from_weight(w: f32, frac_bits: u32) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }

    fn from_weight(w: f32, _frac_bits: u32) -> Self {
        w as f64
    }
}

impl Scalar for i64 {
    fn zero() -> Self {
        0
    }

    fn from_weight(w: f32, frac_bits: u32) -> Self {
        ((w as f64) * (frac_bits as f64).exp2()).round_ties_even() as i64
    }
}

fn weights_as<T: Scalar>(op: &OperatorSpec, frac_bits: u32) -> Result<Array4<T>> {
    let w = op
        .weights
        .as_ref()
        .ok_or_else(|| Error::validation(op.label(), "op has no weights"))?;
    Ok(w.mapv(|v| T::from_weight(v, frac_bits)))
}

fn out_dims(input: (usize, usize), op: &OperatorSpec) -> Result<(usize, usize)> {
    let r = conv_output_dim(input.0, op.k, op.stride, op.padding);
    let c = conv_output_dim(input.1, op.k, op.stride, op.padding);
    match (r, c) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::validation(op.label(), "kernel larger than padded input")),
    }
}

/// Runs one op on `input`. Conv, depthwise and linear ops use weights;
/// pool is a max pool with padding ignored outside the input.
pub fn run_op<T: Scalar>(input: &Array3<T>, op: &OperatorSpec, frac_bits: u32) -> Result<Array3<T>> {
    let (ch, rows, cols) = input.dim();
    match op.kind {
        OpKind::Conv | OpKind::DepthwiseConv => {
            let w = weights_as::<T>(op, frac_bits)?;
            let (m, n, k, _) = w.dim();
            let depthwise = op.kind == OpKind::DepthwiseConv;
            if (!depthwise && n != ch) || (depthwise && m != ch) {
                return Err(Error::validation(
                    op.label(),
                    format!("input has {ch} channels, weights are {:?}", w.shape()),
                ));
            }
            let (r_out, c_out) = out_dims((rows, cols), op)?;
            let pad = op.padding as isize;
            let mut out = Array3::from_elem((m, r_out, c_out), T::zero());
            for o in 0..m {
                let inputs = if depthwise { o..o + 1 } else { 0..n };
                for r in 0..r_out {
                    for c in 0..c_out {
                        let mut acc = T::zero();
                        for i in inputs.clone() {
                            let wi = if depthwise { 0 } else { i };
                            for kr in 0..k {
                                let y = (r * op.stride + kr) as isize - pad;
                                if y < 0 || y >= rows as isize {
                                    continue;
                                }
                                for kc in 0..k {
                                    let x = (c * op.stride + kc) as isize - pad;
                                    if x < 0 || x >= cols as isize {
                                        continue;
                                    }
                                    acc = acc + w[[o, wi, kr, kc]] * input[[i, y as usize, x as usize]];
                                }
                            }
                        }
                        out[[o, r, c]] = acc;
                    }
                }
            }
            Ok(out)
        }
        OpKind::Pool => {
            let (r_out, c_out) = out_dims((rows, cols), op)?;
            let pad = op.padding as isize;
            let mut out = Array3::from_elem((ch, r_out, c_out), T::zero());
            for i in 0..ch {
                for r in 0..r_out {
                    for c in 0..c_out {
                        let mut best: Option<T> = None;
                        for kr in 0..op.k {
                            for kc in 0..op.k {
                                let y = (r * op.stride + kr) as isize - pad;
                                let x = (c * op.stride + kc) as isize - pad;
                                if y < 0 || x < 0 || y >= rows as isize || x >= cols as isize {
                                    continue;
                                }
                                let v = input[[i, y as usize, x as usize]];
                                if best.is_none_or(|b| v > b) {
                                    best = Some(v);
                                }
                            }
                        }
                        out[[i, r, c]] = best.unwrap_or_else(T::zero);
                    }
                }
            }
            Ok(out)
        }
        OpKind::Linear => {
            let w = weights_as::<T>(op, frac_bits)?;
            let (m, n, _, _) = w.dim();
            if n != input.len() {
                return Err(Error::validation(
                    op.label(),
                    format!("linear expects {n} inputs, got {}", input.len()),
                ));
            }
            let mut out = Array3::from_elem((m, 1, 1), T::zero());
            for o in 0..m {
                let mut acc = T::zero();
                for (j, &v) in input.iter().enumerate() {
                    acc = acc + w[[o, j, 0, 0]] * v;
                }
                out[[o, 0, 0]] = acc;
            }
            Ok(out)
        }
    }
}

/// Float convolution of a single op.
pub fn naive_conv(input: &Array3<f64>, op: &OperatorSpec) -> Result<Array3<f64>> {
    run_op(input, op, 0)
}

/// Fixed-point convolution with weights at `frac_bits` fraction bits.
pub fn naive_conv_fixed(input: &Array3<i64>, op: &OperatorSpec, frac_bits: u32) -> Result<Array3<i64>> {
    run_op(input, op, frac_bits)
}

/// Runs the whole network on one input per input node (declaration order)
/// and returns the first output node's tensor. Several ops writing one node
/// are summed.
pub fn run_network<T: Scalar>(net: &NetworkArch, inputs: &[Array3<T>], frac_bits: u32) -> Result<Array3<T>> {
    let sources = net.inputs();
    if sources.len() != inputs.len() {
        return Err(Error::validation(
            net.name(),
            format!("network has {} inputs, got {}", sources.len(), inputs.len()),
        ));
    }
    let mut values: HashMap<&str, Array3<T>> = HashMap::new();
    for (node, x) in sources.iter().zip(inputs) {
        if x.dim() != (node.channels, node.rows, node.cols) {
            return Err(Error::validation(
                format!("input `{}`", node.id),
                format!(
                    "tensor {:?} vs node {}x{}x{}",
                    x.shape(),
                    node.channels,
                    node.rows,
                    node.cols
                ),
            ));
        }
        values.insert(node.id.as_str(), x.clone());
    }
    for op in net.ops() {
        let x = values
            .get(op.src.as_str())
            .expect("topological order computes sources first");
        let y = run_op(x, op, frac_bits)?;
        match values.get_mut(op.dst.as_str()) {
            Some(acc) => acc.zip_mut_with(&y, |a, &b| *a = *a + b),
            None => {
                values.insert(op.dst.as_str(), y);
            }
        }
    }
    let out = net.outputs()[0].id.as_str();
    Ok(values.remove(out).expect("output node computed"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netzoo::OperatorSpec;

    #[test]
    fn identity_kernel() {
        let op = OperatorSpec::conv(
            "a",
            "b",
            1,
            1,
            0,
            Array4::from_shape_fn((2, 2, 1, 1), |(o, i, _, _)| if o == i { 1.0 } else { 0.0 }),
        );
        let x = Array3::from_shape_fn((2, 3, 3), |(c, r, k)| (c * 9 + r * 3 + k) as f64);
        assert_eq!(naive_conv(&x, &op).unwrap(), x);
    }

    #[test]
    fn zero_weights_zero_output() {
        let op = OperatorSpec::conv("a", "b", 3, 1, 1, Array4::zeros((2, 1, 3, 3)));
        let x = Array3::from_elem((1, 4, 4), 3.0);
        assert!(naive_conv(&x, &op).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ones_kernel_on_ones() {
        let op = OperatorSpec::conv("a", "b", 3, 1, 1, Array4::ones((1, 1, 3, 3)));
        let x = Array3::from_elem((1, 5, 5), 1.0);
        let y = naive_conv(&x, &op).unwrap();
        assert_eq!(y[[0, 2, 2]], 9.0);
        assert_eq!(y[[0, 0, 0]], 4.0);
        assert_eq!(y[[0, 0, 2]], 6.0);
    }

    #[test]
    fn depthwise_and_pool() {
        let op = OperatorSpec::depthwise(
            "a",
            "b",
            1,
            1,
            0,
            Array4::from_shape_fn((2, 1, 1, 1), |(o, ..)| o as f32 + 1.0),
        );
        let x = Array3::from_elem((2, 2, 2), 1i64);
        let y = naive_conv_fixed(&x, &op, 0).unwrap();
        assert_eq!(y[[1, 0, 0]], 2);
        let pool = OperatorSpec::pool("a", "b", 2, 2, 0);
        let x = Array3::from_shape_fn((1, 4, 4), |(_, r, c)| (r * 4 + c) as f64);
        let y = run_op(&x, &pool, 0).unwrap();
        assert_eq!(y.into_raw_vec_and_offset().0, vec![5.0, 7.0, 13.0, 15.0]);
    }

    #[test]
    fn fixed_weights_scaled() {
        let op = OperatorSpec::conv("a", "b", 1, 1, 0, Array4::from_elem((1, 1, 1, 1), 0.75));
        let x = Array3::from_elem((1, 1, 1), 4i64);
        assert_eq!(naive_conv_fixed(&x, &op, 2).unwrap()[[0, 0, 0]], 12);
    }
}
