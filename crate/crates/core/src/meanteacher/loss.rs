use crate::error::{data_err, shape_err, Error, Result};
use crate::tensor::Tensor;

pub const PROB_CLAMP: f32 = 1e-7;

/// Mean binary cross-entropy over weak clips and classes with probabilities
/// clamped to `[1e-7, 1 - 1e-7]`. Returns the loss and its gradient with
/// respect to `clip_probs` (zero where the clamp is active).
pub fn classification_loss(clip_probs: &[f32], labels: &[f32]) -> Result<(f64, Vec<f32>)> {
    if clip_probs.len() != labels.len() {
        return Err(shape_err!(
            "{} probabilities for {} labels",
            clip_probs.len(),
            labels.len()
        ));
    }
    if let Some(y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(data_err!("weak label {y} is not 0 or 1"));
    }
    if clip_probs.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = clip_probs.len() as f64;
    let (lo, hi) = (PROB_CLAMP as f64, 1.0 - PROB_CLAMP as f64);
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(clip_probs.len());
    for (&p, &y) in clip_probs.iter().zip(labels) {
        let raw = p as f64;
        let pc = raw.clamp(lo, hi);
        let y = y as f64;
        loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        let g = if raw > lo && raw < hi {
            (pc - y) / (pc * (1.0 - pc)) / n
        } else {
            0.0
        };
        grad.push(g as f32);
    }
    Ok((loss / n, grad))
}

/// Outputs of one model over a batch: `[B, C]` clip and `[B, T, C]` frame
/// probabilities, with `lengths[b]` valid frames per clip.
pub struct Outputs<'a> {
    pub clip: &'a Tensor<f32>,
    pub frames: &'a Tensor<f32>,
    pub lengths: &'a [usize],
}

/// Clip MSE (mean over clips and classes) plus frame MSE (mean over all
/// valid frames and classes), with gradients for the student side.
pub fn consistency_loss(
    student: &Outputs,
    teacher: &Outputs,
) -> Result<(f64, Tensor<f32>, Tensor<f32>)> {
    student.clip.expect_shape(teacher.clip.shape())?;
    student.frames.expect_shape(teacher.frames.shape())?;
    if student.lengths != teacher.lengths || student.frames.ndim() != 3 {
        return Err(shape_err!("student and teacher outputs disagree in layout"));
    }
    let (b, t, c) = (
        student.frames.dim(0),
        student.frames.dim(1),
        student.frames.dim(2),
    );
    let mut g_clip = Tensor::zeros(student.clip.shape());
    let mut g_frames = Tensor::zeros(student.frames.shape());
    if b == 0 {
        return Ok((0.0, g_clip, g_frames));
    }
    let n_clip = (b * c) as f64;
    let mut clip_mse = 0.0;
    for ((&s, &q), g) in student
        .clip
        .data()
        .iter()
        .zip(teacher.clip.data())
        .zip(g_clip.data_mut())
    {
        let d = s as f64 - q as f64;
        clip_mse += d * d;
        *g = (2.0 * d / n_clip) as f32;
    }
    let valid: usize = student.lengths.iter().sum();
    let n_frames = (valid * c) as f64;
    let mut frame_mse = 0.0;
    for bi in 0..b {
        let len = student.lengths[bi].min(t);
        let (s, q) = (
            student.frames.slice_outer(bi),
            teacher.frames.slice_outer(bi),
        );
        let g = &mut g_frames.slice_outer_mut(bi)[..len * c];
        for ((&s, &q), g) in s[..len * c].iter().zip(&q[..len * c]).zip(g) {
            let d = s as f64 - q as f64;
            frame_mse += d * d;
            *g = (2.0 * d / n_frames) as f32;
        }
    }
    Ok((
        clip_mse / n_clip + frame_mse / n_frames.max(1.0),
        g_clip,
        g_frames,
    ))
}

/// `w_class * class_loss + w_cons * cons_loss`.
pub fn total_loss(class_loss: f64, cons_loss: f64, w_class: f64, w_cons: f64) -> Result<f64> {
    if !class_loss.is_finite() || !cons_loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss terms ({class_loss}, {cons_loss})"
        )));
    }
    Ok(w_class * class_loss + w_cons * cons_loss)
}
