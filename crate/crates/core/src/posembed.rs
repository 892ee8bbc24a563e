//! Sinusoidal temporal position embeddings.
//!
//! Pair `i` (1-based, `1 ≤ i ≤ ⌈d/2⌉`) of a `d`-dimensional embedding holds
//! `cos(t·ω_i)` then `sin(t·ω_i)` with `ω_i = 10000^(−2i/d)`; an odd `d`
//! truncates the final pair to its cosine component. Frame indices `t` are
//! 1-based. Because each pair is a point on a circle, advancing time by `k`
//! frames is a fixed rotation of each pair — [`offset_map`] builds that
//! block-diagonal matrix.

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Angular frequency of pair `i` (1-based) in a `d`-dimensional embedding.
fn frequency(i: usize, d: usize) -> f64 {
    10000f64.powf(-2.0 * i as f64 / d as f64)
}

/// Embedding of frame `t` (1-based) in `dim` dimensions.
pub fn embed_position(t: usize, dim: usize) -> Result<Vec<f64>> {
    if t < 1 {
        return Err(Error::InvalidInput("position index must be at least 1".into()));
    }
    if dim < 2 {
        return Err(Error::InvalidInput(format!(
            "embedding dimension must be at least 2, got {dim}"
        )));
    }
    let mut out = Vec::with_capacity(dim);
    let pairs = dim.div_ceil(2);
    for i in 1..=pairs {
        let angle = t as f64 * frequency(i, dim);
        out.push(angle.cos());
        if out.len() < dim {
            out.push(angle.sin());
        }
    }
    Ok(out)
}

/// The `dim × dim` matrix `M_k` with `M_k · p_t = p_{t+k}` for every `t`:
/// one 2×2 rotation by `k·ω_i` per (cos, sin) pair.
///
/// For odd `dim` the final truncated component gets the lone `cos(k·ω)`
/// entry of its rotation block; exact propagation of that component is only
/// possible for even dimensions.
pub fn offset_map(k: usize, dim: usize) -> Result<Mat> {
    if dim < 2 {
        return Err(Error::InvalidInput(format!(
            "embedding dimension must be at least 2, got {dim}"
        )));
    }
    let mut m = Mat::zeros(dim, dim);
    let pairs = dim.div_ceil(2);
    for i in 1..=pairs {
        let angle = k as f64 * frequency(i, dim);
        let (s, c) = angle.sin_cos();
        let row = 2 * (i - 1);
        m.set(row, row, c);
        if row + 1 < dim {
            m.set(row, row + 1, -s);
            m.set(row + 1, row, s);
            m.set(row + 1, row + 1, c);
        }
    }
    Ok(m)
}
