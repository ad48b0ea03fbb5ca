use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use super::manifest::{DatasetManifest, Partition};
use super::tsv::{read_clip_list, read_strong_tsv, read_weak_tsv};
use super::{find, read_feature_file};
use crate::error::{Error, Result};
use crate::metrics::EventMap;
use crate::model::{Modality, MEL_BINS, TIME_REDUCTION};
use crate::tensor::FeatureTensor;

/// Features of one clip. Pretrained streams have a quarter of the spectral frames.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipRecord {
    pub clip_id: String,
    pub duration_s: f64,
    /// `[T, 128]`
    pub spectral: Option<FeatureTensor>,
    /// `[T/4, pre_audio_dim]`
    pub pre_audio: Option<FeatureTensor>,
    /// `[T/4, pre_visual_dim]`
    pub pre_visual: Option<FeatureTensor>,
}

impl ClipRecord {
    pub fn get(&self, m: Modality) -> Option<&FeatureTensor> {
        match m {
            Modality::Spectral => self.spectral.as_ref(),
            Modality::PreAudio => self.pre_audio.as_ref(),
            Modality::PreVisual => self.pre_visual.as_ref(),
        }
    }

    /// Frames on the model's output grid.
    pub fn output_frames(&self) -> usize {
        match (&self.spectral, &self.pre_audio, &self.pre_visual) {
            (Some(s), _, _) => s.dim(0) / TIME_REDUCTION,
            (None, Some(a), _) => a.dim(0),
            (None, None, Some(v)) => v.dim(0),
            _ => 0,
        }
    }

    /// Checks tensor ranks, feature widths, and the 4:1 frame contract.
    pub fn check(&self, manifest: &DatasetManifest) -> Result<()> {
        let id = &self.clip_id;
        let mut expected = None;
        if let Some(s) = &self.spectral {
            if s.ndim() != 2 || s.dim(1) != MEL_BINS {
                return Err(Error::Data(format!(
                    "{id}: spectral must be [T,{MEL_BINS}], got {:?}",
                    s.shape()
                )));
            }
            if s.dim(0) == 0 || s.dim(0) % TIME_REDUCTION != 0 {
                return Err(Error::Alignment(format!(
                    "{id}: spectral frame count {} is not a positive multiple of {TIME_REDUCTION}",
                    s.dim(0)
                )));
            }
            expected = Some(s.dim(0) / TIME_REDUCTION);
        }
        for (m, t, dim) in [
            (Modality::PreAudio, &self.pre_audio, manifest.pre_audio_dim),
            (
                Modality::PreVisual,
                &self.pre_visual,
                manifest.pre_visual_dim,
            ),
        ] {
            let Some(t) = t else { continue };
            if t.ndim() != 2 || t.dim(1) != dim {
                return Err(Error::Data(format!(
                    "{id}: {} must be [T',{dim}], got {:?}",
                    m.name(),
                    t.shape()
                )));
            }
            match expected {
                Some(e) if e != t.dim(0) => {
                    return Err(Error::Alignment(format!(
                        "expected {e}, got {} ({} frames of clip {id})",
                        t.dim(0),
                        m.name()
                    )))
                }
                None if t.dim(0) == 0 => {
                    return Err(Error::Data(format!("{id}: empty {}", m.name())))
                }
                None => expected = Some(t.dim(0)),
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakClip {
    pub record: ClipRecord,
    pub labels: BTreeSet<usize>,
}

/// The four partitions of a dataset directory. Strong labels are exposed only
/// for validation and test.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub weak: Vec<WeakClip>,
    pub unlabeled: Vec<ClipRecord>,
    pub val: Vec<ClipRecord>,
    pub test: Vec<ClipRecord>,
    pub val_strong: EventMap,
    pub test_strong: EventMap,
}

impl Dataset {
    pub fn records(&self, p: Partition) -> Vec<&ClipRecord> {
        match p {
            Partition::Weak => self.weak.iter().map(|w| &w.record).collect(),
            Partition::Unlabeled => self.unlabeled.iter().collect(),
            Partition::Val => self.val.iter().collect(),
            Partition::Test => self.test.iter().collect(),
        }
    }

    /// Strong labels of a scored partition.
    pub fn strong(&self, p: Partition) -> Option<&EventMap> {
        match p {
            Partition::Val => Some(&self.val_strong),
            Partition::Test => Some(&self.test_strong),
            _ => None,
        }
    }
}

/// Reads one clip's feature file, keeping the modalities the manifest lists.
pub fn load_clip(
    dir: &Path,
    manifest: &DatasetManifest,
    clip_id: &str,
    duration_s: f64,
) -> Result<ClipRecord> {
    let path = dir
        .join(&manifest.features_dir)
        .join(format!("{clip_id}.ftb"));
    let tensors = read_feature_file(&path)?;
    let get = |m: Modality| -> Result<Option<FeatureTensor>> {
        if !manifest.has(m) {
            return Ok(None);
        }
        find(&tensors, m.name()).cloned().map(Some).ok_or_else(|| {
            Error::Data(format!(
                "{clip_id}: missing {} record in {}",
                m.name(),
                path.display()
            ))
        })
    };
    let record = ClipRecord {
        clip_id: clip_id.to_string(),
        duration_s,
        spectral: get(Modality::Spectral)?,
        pre_audio: get(Modality::PreAudio)?,
        pre_visual: get(Modality::PreVisual)?,
    };
    record.check(manifest)?;
    Ok(record)
}

pub fn load_partition(
    dir: &Path,
    manifest: &DatasetManifest,
    p: Partition,
) -> Result<Vec<ClipRecord>> {
    read_clip_list(&dir.join(manifest.list_file(p)))?
        .into_iter()
        .map(|c| load_clip(dir, manifest, &c.clip_id, c.duration_s))
        .collect()
}

pub fn load_strong(dir: &Path, manifest: &DatasetManifest, p: Partition) -> Result<EventMap> {
    Ok(
        read_strong_tsv(&dir.join(manifest.strong_file(p)), &manifest.vocabulary)?
            .into_iter()
            .map(|a| (a.clip_id, a.events))
            .collect(),
    )
}

pub fn load_split(dir: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::read(dir)?;
    let weak_path = dir.join(&manifest.weak_labels);
    let mut labels: BTreeMap<String, BTreeSet<usize>> =
        read_weak_tsv(&weak_path, &manifest.vocabulary)?
            .into_iter()
            .map(|w| (w.clip_id, w.labels))
            .collect();
    let weak_records = load_partition(dir, &manifest, Partition::Weak)?;
    let known: BTreeSet<&String> = weak_records.iter().map(|r| &r.clip_id).collect();
    if let Some(stray) = labels.keys().find(|k| !known.contains(k)) {
        return Err(Error::Data(format!(
            "{}: label for unknown clip {stray}",
            weak_path.display()
        )));
    }
    let weak = weak_records
        .into_iter()
        .map(|record| WeakClip {
            labels: labels.remove(&record.clip_id).unwrap_or_default(),
            record,
        })
        .collect();
    let strong_checked = |p: Partition, records: &[ClipRecord]| -> Result<EventMap> {
        let strong = load_strong(dir, &manifest, p)?;
        let known: BTreeSet<&String> = records.iter().map(|r| &r.clip_id).collect();
        if let Some(stray) = strong.keys().find(|k| !known.contains(k)) {
            return Err(Error::Data(format!(
                "{} strong labels name unknown clip {stray}",
                p.name()
            )));
        }
        Ok(strong)
    };
    let val = load_partition(dir, &manifest, Partition::Val)?;
    let test = load_partition(dir, &manifest, Partition::Test)?;
    Ok(Dataset {
        root: dir.to_path_buf(),
        weak,
        unlabeled: load_partition(dir, &manifest, Partition::Unlabeled)?,
        val_strong: strong_checked(Partition::Val, &val)?,
        test_strong: strong_checked(Partition::Test, &test)?,
        val,
        test,
        manifest,
    })
}
