//! Linear (self-weighted) pooling of frame probabilities into clip probabilities.

use crate::tensor::Real;

/// `p_clip = Σ_t p_t² / Σ_t p_t` over the first `len` frames of a
/// `[T, n_classes]` row-major matrix. A class whose frames are all zero gets 0.
pub fn linear_pool<T: Real>(frames: &[T], n_classes: usize, len: usize) -> Vec<T> {
    let mut sum = vec![T::zero(); n_classes];
    let mut sum_sq = vec![T::zero(); n_classes];
    for row in frames.chunks(n_classes).take(len) {
        for c in 0..n_classes {
            sum[c] += row[c];
            sum_sq[c] += row[c] * row[c];
        }
    }
    sum.iter()
        .zip(&sum_sq)
        .map(|(&s, &q)| if s > T::zero() { q / s } else { T::zero() })
        .collect()
}

/// Gradient of [`linear_pool`] with respect to the frames, added into `grad_frames`.
///
/// `∂p_clip/∂p_t = (2 p_t S − Q) / S²`. At `S = 0` the limit along constant
/// frames, `1/len`, is used.
pub fn linear_pool_backward<T: Real>(
    frames: &[T],
    n_classes: usize,
    len: usize,
    grad_clip: &[T],
    grad_frames: &mut [T],
) {
    let mut sum = vec![T::zero(); n_classes];
    let mut sum_sq = vec![T::zero(); n_classes];
    for row in frames.chunks(n_classes).take(len) {
        for c in 0..n_classes {
            sum[c] += row[c];
            sum_sq[c] += row[c] * row[c];
        }
    }
    let two = T::lit(2.0);
    let inv_len = T::one() / T::lit(len.max(1) as f64);
    for (row, grow) in frames
        .chunks(n_classes)
        .zip(grad_frames.chunks_mut(n_classes))
        .take(len)
    {
        for c in 0..n_classes {
            let d = if sum[c] > T::zero() {
                (two * row[c] * sum[c] - sum_sq[c]) / (sum[c] * sum[c])
            } else {
                inv_len
            };
            grow[c] += grad_clip[c] * d;
        }
    }
}
