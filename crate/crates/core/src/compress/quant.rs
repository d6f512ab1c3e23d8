use ndarray::Array4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Signed fixed-point format with `int_bits` (sign included) and
/// `frac_bits` after the binary point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub int_bits: u32,
    pub frac_bits: u32,
}

impl FixedPointFormat {
    pub fn new(int_bits: u32, frac_bits: u32) -> Result<Self> {
        if int_bits == 0 || int_bits + frac_bits > 32 {
            return Err(Error::InvalidCompression(format!(
                "fixed-point <{int_bits}, {frac_bits}> needs I >= 1 and I + F <= 32"
            )));
        }
        Ok(Self { int_bits, frac_bits })
    }

    pub fn total_bits(&self) -> u32 {
        self.int_bits + self.frac_bits
    }

    pub fn step(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// Largest representable magnitude.
    pub fn max_value(&self) -> f64 {
        ((self.int_bits - 1) as f64).exp2() - self.step()
    }

    /// Rounds half to even onto the grid, then saturates.
    pub fn quantize_value(&self, w: f64) -> f64 {
        let scale = (self.frac_bits as f64).exp2();
        let q = (w * scale).round_ties_even() / scale;
        q.clamp(-self.max_value(), self.max_value())
    }
}

/// Quantized copy of `weights` and the largest absolute error.
pub fn quantize(weights: &Array4<f32>, fmt: FixedPointFormat) -> (Array4<f32>, f64) {
    let mut max_err = 0.0f64;
    let out = weights.mapv(|w| {
        let q = fmt.quantize_value(w as f64);
        max_err = max_err.max((w as f64 - q).abs());
        q as f32
    });
    (out, max_err)
}

/// Integer bits (sign included) needed for the largest weight magnitude.
pub fn derive_int_bits(weights: &Array4<f32>) -> u32 {
    const EPS: f64 = 1e-9;
    let max = weights.iter().fold(0.0f64, |m, &w| m.max((w as f64).abs()));
    1 + (max + EPS).log2().ceil().max(0.0) as u32
}
