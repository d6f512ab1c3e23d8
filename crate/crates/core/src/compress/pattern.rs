use ndarray::{Array2, Array4, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Zero positions of one `k x k` kernel mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatternMask {
    pub k: usize,
    /// Sorted row-major `(row, col)` positions that are pruned.
    pub zeros: Vec<(usize, usize)>,
}

impl PatternMask {
    pub fn new(k: usize, mut zeros: Vec<(usize, usize)>) -> Result<Self> {
        zeros.sort_unstable();
        zeros.dedup();
        if zeros.len() >= k * k {
            return Err(Error::InvalidPattern(format!(
                "{} zeros in a {k}x{k} kernel",
                zeros.len()
            )));
        }
        if let Some(&(r, c)) = zeros.iter().find(|&&(r, c)| r >= k || c >= k) {
            return Err(Error::InvalidPattern(format!("position ({r}, {c}) outside {k}x{k}")));
        }
        Ok(Self { k, zeros })
    }

    /// The all-keep mask.
    pub fn dense(k: usize) -> Self {
        Self { k, zeros: Vec::new() }
    }

    pub fn pat_c(&self) -> usize {
        self.zeros.len()
    }

    /// Row-major keep flags.
    pub fn keep(&self) -> Vec<bool> {
        let mut keep = vec![true; self.k * self.k];
        for &(r, c) in &self.zeros {
            keep[r * self.k + c] = false;
        }
        keep
    }

    /// Squared L2 norm of the weights this mask keeps.
    pub fn kept_energy(&self, kernel: ArrayView2<'_, f32>) -> f64 {
        let keep = self.keep();
        kernel
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(&w, _)| (w as f64) * (w as f64))
            .sum()
    }
}

/// The masks one layer may use, all from the same category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternLibrary {
    pub k: usize,
    pub pat_c: usize,
    pub masks: Vec<PatternMask>,
}

/// Default upper bound on library size.
pub const LIBRARY_CAP: usize = 8;

impl PatternLibrary {
    pub fn new(k: usize, pat_c: usize, masks: Vec<PatternMask>) -> Result<Self> {
        if masks.is_empty() || masks.len() > LIBRARY_CAP {
            return Err(Error::InvalidPattern(format!(
                "library holds {} masks, allowed 1..={LIBRARY_CAP}",
                masks.len()
            )));
        }
        for (i, m) in masks.iter().enumerate() {
            if m.k != k || m.pat_c() != pat_c {
                return Err(Error::InvalidPattern(format!(
                    "mask {i} is {}x{} with {} zeros, library is {k}x{k} with {pat_c}",
                    m.k,
                    m.k,
                    m.pat_c()
                )));
            }
            if masks[..i].contains(m) {
                return Err(Error::InvalidPattern(format!("mask {i} is a duplicate")));
            }
        }
        Ok(Self { k, pat_c, masks })
    }

    pub fn pat_n(&self) -> usize {
        self.masks.len()
    }

    /// Serializes as a JSON list of zero-position arrays.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.masks
                .iter()
                .map(|m| serde_json::json!(m.zeros.iter().map(|&(r, c)| [r, c]).collect::<Vec<_>>()))
                .collect(),
        )
    }

    pub fn from_json(k: usize, value: &serde_json::Value) -> Result<Self> {
        let lists: Vec<Vec<[usize; 2]>> =
            serde_json::from_value(value.clone()).map_err(|e| Error::parse("pattern library", e.to_string()))?;
        let masks = lists
            .into_iter()
            .map(|zs| PatternMask::new(k, zs.into_iter().map(|[r, c]| (r, c)).collect()))
            .collect::<Result<Vec<_>>>()?;
        let pat_c = masks.first().map_or(0, PatternMask::pat_c);
        Self::new(k, pat_c, masks)
    }
}

/// `C(n, r)`, saturating at `u128::MAX`.
pub fn binomial(n: u64, r: u64) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Every mask with `pat_c` zeros in a `k x k` kernel, in lexicographic order
/// of the sorted zero positions.
pub fn enumerate_patterns(k: usize, pat_c: usize) -> Result<Vec<PatternMask>> {
    let cells = k * k;
    if pat_c >= cells {
        return Err(Error::InvalidPattern(format!("{pat_c} zeros in a {k}x{k} kernel")));
    }
    let mut out = Vec::with_capacity(binomial(cells as u64, pat_c as u64) as usize);
    let mut idx: Vec<usize> = (0..pat_c).collect();
    loop {
        out.push(PatternMask {
            k,
            zeros: idx.iter().map(|&p| (p / k, p % k)).collect(),
        });
        // Advance to the next combination.
        let mut i = pat_c;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if idx[i] < cells - pat_c + i {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..pat_c {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn check_kernel_size(weights: &Array4<f32>, k: usize) -> Result<()> {
    let s = weights.shape();
    if s[2] != k || s[3] != k {
        return Err(Error::InvalidPattern(format!(
            "library is {k}x{k}, kernels are {}x{}",
            s[2], s[3]
        )));
    }
    Ok(())
}

/// Kept energy of every kernel under every mask, `[kernel][mask]`.
fn energy_table(weights: &Array4<f32>, masks: &[PatternMask]) -> Vec<Vec<f64>> {
    let (m, n) = (weights.shape()[0], weights.shape()[1]);
    let mut table = Vec::with_capacity(m * n);
    for o in 0..m {
        for i in 0..n {
            let kernel = weights.slice(ndarray::s![o, i, .., ..]);
            table.push(masks.iter().map(|mask| mask.kept_energy(kernel)).collect());
        }
    }
    table
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-kernel `[M, N]` index of the library mask that keeps the most
/// energy; ties go to the lowest index.
pub fn assign_patterns(weights: &Array4<f32>, library: &PatternLibrary) -> Result<Array2<usize>> {
    check_kernel_size(weights, library.k)?;
    let (m, n) = (weights.shape()[0], weights.shape()[1]);
    let table = energy_table(weights, &library.masks);
    Ok(Array2::from_shape_fn((m, n), |(o, i)| argmax_first(&table[o * n + i])))
}

/// Total kept energy when every kernel picks its best mask from `chosen`.
fn library_energy(table: &[Vec<f64>], chosen: &[usize]) -> f64 {
    table
        .iter()
        .map(|row| chosen.iter().map(|&c| row[c]).fold(f64::NEG_INFINITY, f64::max))
        .sum()
}

/// Greedy forward selection of `pat_n` masks from the `pat_c` category,
/// maximizing total kept energy. Masks come back in enumeration order.
pub fn select_library(weights: &Array4<f32>, k: usize, pat_c: usize, pat_n: usize) -> Result<PatternLibrary> {
    check_kernel_size(weights, k)?;
    let candidates = enumerate_patterns(k, pat_c)?;
    if pat_n == 0 || pat_n > candidates.len() {
        return Err(Error::InvalidPattern(format!(
            "pat_n = {pat_n} outside 1..={} for category {pat_c}",
            candidates.len()
        )));
    }
    let table = energy_table(weights, &candidates);
    let mut chosen: Vec<usize> = Vec::with_capacity(pat_n);
    while chosen.len() < pat_n {
        let mut best: Option<(f64, usize)> = None;
        for c in 0..candidates.len() {
            if chosen.contains(&c) {
                continue;
            }
            chosen.push(c);
            let e = library_energy(&table, &chosen);
            chosen.pop();
            if best.is_none_or(|(b, _)| e > b) {
                best = Some((e, c));
            }
        }
        chosen.push(best.expect("a candidate remains").1);
    }
    chosen.sort_unstable();
    let masks = chosen.into_iter().map(|c| candidates[c].clone()).collect();
    // The cap applies to user libraries; a full small category is allowed.
    Ok(PatternLibrary { k, pat_c, masks })
}

/// Zeroes the masked positions of each kernel; `assignment[[o, i]]` picks
/// the mask for kernel `(o, i)`.
pub fn apply_pattern(
    weights: &Array4<f32>,
    library: &PatternLibrary,
    assignment: &Array2<usize>,
) -> Result<Array4<f32>> {
    check_kernel_size(weights, library.k)?;
    let (m, n) = (weights.shape()[0], weights.shape()[1]);
    if assignment.shape() != [m, n] {
        return Err(Error::InvalidPattern(format!(
            "assignment shaped {:?}, weights have {m}x{n} kernels",
            assignment.shape()
        )));
    }
    let mut out = weights.clone();
    for ((o, i), &a) in assignment.indexed_iter() {
        let mask = library
            .masks
            .get(a)
            .ok_or_else(|| Error::InvalidPattern(format!("mask index {a} out of range")))?;
        for &(r, c) in &mask.zeros {
            out[[o, i, r, c]] = 0.0;
        }
    }
    Ok(out)
}

/// `sum(kept^2) / sum(all^2)`; 1 for an all-zero tensor.
pub fn kept_energy_fraction(original: &Array4<f32>, pruned: &Array4<f32>) -> f64 {
    let total: f64 = original.iter().map(|&w| (w as f64).powi(2)).sum();
    if total == 0.0 {
        return 1.0;
    }
    pruned.iter().map(|&w| (w as f64).powi(2)).sum::<f64>() / total
}

/// Input-channel order and per-tile masks that give every weight tile a
/// single pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileHarmony {
    /// New input channel `j` is old channel `permutation[j]`.
    pub permutation: Vec<usize>,
    /// Mask of tile `(output block, input block)` in the new order.
    pub tile_masks: Array2<usize>,
    /// Per-kernel assignment after forcing, in the new channel order.
    pub assignment: Array2<usize>,
    /// Kernels whose mask was overridden.
    pub forced: usize,
}

fn majority(values: impl Iterator<Item = usize>) -> usize {
    let mut counts: Vec<usize> = Vec::new();
    for v in values {
        if v >= counts.len() {
            counts.resize(v + 1, 0);
        }
        counts[v] += 1;
    }
    // Ties go to the lowest mask id.
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Sorts input channels by their majority mask (stable) so like channels
/// share `tn`-wide tiles, then forces each `tm x tn` kernel tile to its
/// majority mask.
pub fn harmonize_tiles(assignment: &Array2<usize>, tm: usize, tn: usize) -> Result<TileHarmony> {
    if tm == 0 || tn == 0 {
        return Err(Error::Config("tile sizes must be positive".into()));
    }
    let (m, n) = assignment.dim();
    let channel_major: Vec<usize> = (0..n).map(|i| majority(assignment.column(i).iter().copied())).collect();
    let mut permutation: Vec<usize> = (0..n).collect();
    permutation.sort_by_key(|&i| channel_major[i]);
    let reordered = Array2::from_shape_fn((m, n), |(o, j)| assignment[[o, permutation[j]]]);

    let (mb, nb) = (m.div_ceil(tm), n.div_ceil(tn));
    let mut tile_masks = Array2::zeros((mb, nb));
    let mut out = reordered.clone();
    let mut forced = 0;
    for bo in 0..mb {
        for bi in 0..nb {
            let rows = bo * tm..((bo + 1) * tm).min(m);
            let cols = bi * tn..((bi + 1) * tn).min(n);
            let tile = reordered.slice(ndarray::s![rows.clone(), cols.clone()]);
            let mask = majority(tile.iter().copied());
            tile_masks[[bo, bi]] = mask;
            for o in rows.clone() {
                for j in cols.clone() {
                    if out[[o, j]] != mask {
                        out[[o, j]] = mask;
                        forced += 1;
                    }
                }
            }
        }
    }
    Ok(TileHarmony {
        permutation,
        tile_masks,
        assignment: out,
        forced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    #[test]
    fn category_sizes() {
        assert_eq!(enumerate_patterns(3, 3).unwrap().len(), 84);
        assert_eq!(enumerate_patterns(3, 0).unwrap(), vec![PatternMask::dense(3)]);
        assert_eq!(enumerate_patterns(3, 8).unwrap().len(), 9);
        assert!(enumerate_patterns(3, 9).is_err());
        assert_eq!(binomial(9, 3), 84);
    }

    #[test]
    fn enumeration_is_sorted_and_distinct() {
        let masks = enumerate_patterns(3, 4).unwrap();
        assert!(masks.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn exact_zero_match_wins() {
        let lib = PatternLibrary::new(
            3,
            1,
            vec![
                PatternMask::new(3, vec![(0, 0)]).unwrap(),
                PatternMask::new(3, vec![(1, 1)]).unwrap(),
            ],
        )
        .unwrap();
        let mut w = Array4::from_elem((1, 1, 3, 3), 1.0f32);
        w[[0, 0, 1, 1]] = 0.0;
        assert_eq!(assign_patterns(&w, &lib).unwrap()[[0, 0]], 1);
        let flat = Array4::from_elem((1, 1, 3, 3), 1.0f32);
        assert_eq!(assign_patterns(&flat, &lib).unwrap()[[0, 0]], 0);
    }

    #[test]
    fn apply_is_idempotent_and_single_survivor() {
        let w = Array4::from_shape_fn((2, 2, 3, 3), |(a, b, c, d)| (a + b + c + d) as f32 + 1.0);
        let lib = select_library(&w, 3, 8, 2).unwrap();
        let a = assign_patterns(&w, &lib).unwrap();
        let p = apply_pattern(&w, &lib, &a).unwrap();
        for o in 0..2 {
            for i in 0..2 {
                let nz = p.slice(ndarray::s![o, i, .., ..]).iter().filter(|v| **v != 0.0).count();
                assert_eq!(nz, 1);
            }
        }
        assert_eq!(apply_pattern(&p, &lib, &a).unwrap(), p);
        let frac = kept_energy_fraction(&w, &p);
        assert!((0.0..=1.0).contains(&frac));
    }

    #[test]
    fn harmony_identity_when_uniform() {
        let a = Array2::from_elem((4, 4), 2usize);
        let h = harmonize_tiles(&a, 2, 2).unwrap();
        assert_eq!(h.permutation, vec![0, 1, 2, 3]);
        assert_eq!(h.forced, 0);
    }

    #[test]
    fn harmony_groups_alternating_channels() {
        let a = Array2::from_shape_fn((3, 4), |(_, i)| i % 2);
        let h = harmonize_tiles(&a, 3, 2).unwrap();
        assert_eq!(h.permutation, vec![0, 2, 1, 3]);
        assert_eq!(h.forced, 0);
        assert_eq!(h.tile_masks, ndarray::arr2(&[[0, 1]]));
    }

    #[test]
    fn single_kernel_tiles_never_force() {
        let a = Array2::from_shape_fn((3, 5), |(o, i)| (o * 7 + i * 3) % 4);
        let h = harmonize_tiles(&a, 1, 1).unwrap();
        assert_eq!(h.forced, 0);
    }

    #[test]
    fn library_json_round_trip() {
        let w = Array4::from_shape_fn((2, 3, 3, 3), |(a, b, c, d)| ((a * 5 + b * 3 + c * 2 + d) % 7) as f32);
        let lib = select_library(&w, 3, 3, 4).unwrap();
        let back = PatternLibrary::from_json(3, &lib.to_json()).unwrap();
        assert_eq!(back, lib);
    }
}
