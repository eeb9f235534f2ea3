//! Deterministic reductions.
//!
//! All loss and metric reductions in this crate sum values in a fixed
//! row-major pairwise-tree order, so results are bit-reproducible across
//! runs and unaffected by how work is scheduled.

/// Sums a slice with a balanced pairwise tree.
///
/// The split point depends only on the slice length, so the summation
/// order is a pure function of the input layout.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        let mut acc = 0.0;
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
