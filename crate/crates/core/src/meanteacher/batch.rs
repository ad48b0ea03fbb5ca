use rand::{Rng, SeedableRng};

use crate::dataio::{ClipRecord, WeakClip};
use crate::error::{config_err, data_err, Result};
use crate::layers::Mode;
use crate::metrics::ClipPrediction;
use crate::model::{Crnn, Modality, ModelInput, MEL_BINS, TIME_REDUCTION};
use crate::tensor::Tensor;

/// Clips stacked along a batch axis, zero-padded to the longest clip.
/// The first `n_weak` clips carry labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub clip_ids: Vec<String>,
    /// `[B, 1, T, 128]`
    pub spectral: Option<Tensor<f32>>,
    /// `[B, T/4, pre_audio_dim]`
    pub pre_audio: Option<Tensor<f32>>,
    /// `[B, T/4, pre_visual_dim]`
    pub pre_visual: Option<Tensor<f32>>,
    /// Valid output frames per clip.
    pub lengths: Vec<usize>,
    /// Row-major `[n_weak, n_classes]` in {0, 1}.
    pub labels: Vec<f32>,
    pub n_weak: usize,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.clip_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clip_ids.is_empty()
    }

    pub fn input(&self) -> ModelInput<'_, f32> {
        ModelInput {
            spectral: self.spectral.as_ref(),
            pre_audio: self.pre_audio.as_ref(),
            pre_visual: self.pre_visual.as_ref(),
            lengths: Some(&self.lengths),
        }
    }
}

/// Stacks the requested modalities of `records`.
pub fn stack_records(records: &[&ClipRecord], modalities: &[Modality]) -> Result<Batch> {
    let lengths: Vec<usize> = records.iter().map(|r| r.output_frames()).collect();
    let t_out = lengths.iter().copied().max().unwrap_or(0);
    let b = records.len();
    let mut batch = Batch {
        clip_ids: records.iter().map(|r| r.clip_id.clone()).collect(),
        spectral: None,
        pre_audio: None,
        pre_visual: None,
        lengths,
        labels: Vec::new(),
        n_weak: 0,
    };
    for &m in modalities {
        let (frames, width) = match m {
            Modality::Spectral => (t_out * TIME_REDUCTION, MEL_BINS),
            _ => {
                let w = records
                    .first()
                    .and_then(|r| r.get(m))
                    .map_or(0, |t| t.dim(1));
                (t_out, w)
            }
        };
        let mut data = vec![0.0f32; b * frames * width];
        for (bi, r) in records.iter().enumerate() {
            let t = r
                .get(m)
                .ok_or_else(|| data_err!("{}: missing {} features", r.clip_id, m.name()))?;
            if t.dim(1) != width {
                return Err(data_err!(
                    "{}: {} width {} differs from batch width {width}",
                    r.clip_id,
                    m.name(),
                    t.dim(1)
                ));
            }
            data[bi * frames * width..][..t.len()].copy_from_slice(t.data());
        }
        let tensor = match m {
            Modality::Spectral => Tensor::from_vec(&[b, 1, frames, width], data)?,
            _ => Tensor::from_vec(&[b, frames, width], data)?,
        };
        match m {
            Modality::Spectral => batch.spectral = Some(tensor),
            Modality::PreAudio => batch.pre_audio = Some(tensor),
            Modality::PreVisual => batch.pre_visual = Some(tensor),
        }
    }
    Ok(batch)
}

/// Uniform draws with replacement.
pub fn sample_indices<R: Rng + ?Sized>(
    pool: usize,
    count: usize,
    rng: &mut R,
    what: &str,
) -> Result<Vec<usize>> {
    if count > 0 && pool == 0 {
        return Err(config_err!(
            "{what} pool is empty but {count} clips per batch were requested"
        ));
    }
    Ok((0..count).map(|_| rng.random_range(0..pool)).collect())
}

/// `n_weak` labeled clips followed by `n_unlabeled` unlabeled clips.
pub fn compose_batch<R: Rng + ?Sized>(
    weak: &[WeakClip],
    unlabeled: &[ClipRecord],
    n_weak: usize,
    n_unlabeled: usize,
    modalities: &[Modality],
    n_classes: usize,
    rng: &mut R,
) -> Result<Batch> {
    let wi = sample_indices(weak.len(), n_weak, rng, "weak")?;
    let ui = sample_indices(unlabeled.len(), n_unlabeled, rng, "unlabeled")?;
    let records: Vec<&ClipRecord> = wi
        .iter()
        .map(|&i| &weak[i].record)
        .chain(ui.iter().map(|&i| &unlabeled[i]))
        .collect();
    let mut batch = stack_records(&records, modalities)?;
    batch.n_weak = n_weak;
    batch.labels = vec![0.0; n_weak * n_classes];
    for (row, &i) in batch.labels.chunks_mut(n_classes.max(1)).zip(&wi) {
        for &c in &weak[i].labels {
            *row.get_mut(c)
                .ok_or_else(|| data_err!("{}: label {c} out of range", weak[i].record.clip_id))? =
                1.0;
        }
    }
    Ok(batch)
}

/// Eval-mode probabilities for each record, in input order. Clips are batched
/// only with clips of the same length, so no clip sees padding.
pub fn predict_records(
    model: &mut Crnn<f32>,
    records: &[&ClipRecord],
    batch_size: usize,
) -> Result<Vec<ClipPrediction>> {
    let modalities = model.config().modalities();
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by_key(|&i| (records[i].output_frames(), i));
    let mut out: Vec<Option<ClipPrediction>> = vec![None; records.len()];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut start = 0;
    while start < order.len() {
        let len = records[order[start]].output_frames();
        let mut end = start;
        while end < order.len()
            && end - start < batch_size.max(1)
            && records[order[end]].output_frames() == len
        {
            end += 1;
        }
        let group: Vec<&ClipRecord> = order[start..end].iter().map(|&i| records[i]).collect();
        let batch = stack_records(&group, &modalities)?;
        let output = model.forward(&batch.input(), Mode::Eval, &mut rng)?;
        for (k, &i) in order[start..end].iter().enumerate() {
            let clip = output.clip(k);
            out[i] = Some(ClipPrediction {
                clip_id: records[i].clip_id.clone(),
                duration_s: records[i].duration_s,
                n_frames: clip.frame_probs.dim(0),
                frame_probs: clip.frame_probs.into_vec(),
                clip_probs: clip.clip_probs,
            });
        }
        start = end;
    }
    Ok(out
        .into_iter()
        .map(|p| p.expect("every clip predicted"))
        .collect())
}
