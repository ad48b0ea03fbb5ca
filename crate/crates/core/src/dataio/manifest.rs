use std::path::Path;

use super::synth::SynthSpec;
use super::tsv::{read_text, write_text};
use crate::error::{config_err, Result};
use crate::kv::{format_kv, parse_kv, KvView};
use crate::metrics::SPECTRAL_FRAME_RATE;
use crate::model::{Modality, MEL_BINS};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const DATASET_FORMAT: &str = "sedfusion-dataset-1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Partition {
    Weak = 0,
    Unlabeled = 1,
    Val = 2,
    Test = 3,
}

impl Partition {
    pub const ALL: [Partition; 4] = [
        Partition::Weak,
        Partition::Unlabeled,
        Partition::Val,
        Partition::Test,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Weak => "weak",
            Partition::Unlabeled => "unlabeled",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                config_err!("unknown partition {s:?} (expected weak, unlabeled, val or test)")
            })
    }
}

/// Flat `key=value` description of a dataset directory.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub vocabulary: Vec<String>,
    pub pre_audio_dim: usize,
    pub pre_visual_dim: usize,
    pub modalities: Vec<Modality>,
    pub features_dir: String,
    pub weak_labels: String,
    /// Generator settings, informational.
    pub synth: Vec<(String, String)>,
}

impl DatasetManifest {
    pub fn for_synth(spec: &SynthSpec) -> Self {
        let mut synth: Vec<(String, String)> = spec
            .entries()
            .into_iter()
            .map(|(k, v)| (format!("synth.{k}"), v))
            .collect();
        synth.sort();
        Self {
            vocabulary: spec.vocabulary.clone(),
            pre_audio_dim: spec.pre_audio_dim,
            pre_visual_dim: spec.pre_visual_dim,
            modalities: vec![Modality::Spectral, Modality::PreAudio, Modality::PreVisual],
            features_dir: "features".into(),
            weak_labels: "weak.tsv".into(),
            synth,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn list_file(&self, p: Partition) -> String {
        format!("{}.lst", p.name())
    }

    pub fn strong_file(&self, p: Partition) -> String {
        format!("{}_strong.tsv", p.name())
    }

    pub fn has(&self, m: Modality) -> bool {
        self.modalities.contains(&m)
    }

    pub fn to_text(&self) -> String {
        let mut entries: Vec<(String, String)> = vec![
            ("format".into(), DATASET_FORMAT.into()),
            ("vocabulary".into(), self.vocabulary.join(",")),
            (
                "spectral_frame_rate".into(),
                SPECTRAL_FRAME_RATE.to_string(),
            ),
            ("mel_bins".into(), MEL_BINS.to_string()),
            ("pre_audio_dim".into(), self.pre_audio_dim.to_string()),
            ("pre_visual_dim".into(), self.pre_visual_dim.to_string()),
            (
                "modalities".into(),
                self.modalities
                    .iter()
                    .map(|m| m.name())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("features_dir".into(), self.features_dir.clone()),
            ("weak_labels".into(), self.weak_labels.clone()),
        ];
        entries.extend(self.synth.iter().cloned());
        format_kv(&entries)
    }

    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let map = parse_kv(text, context)?;
        let kv = KvView { map: &map, context };
        if kv.str("format")? != DATASET_FORMAT {
            return Err(config_err!(
                "{context}: unsupported dataset format {:?}",
                kv.str("format")?
            ));
        }
        let rate: f64 = kv.num("spectral_frame_rate")?;
        if rate != SPECTRAL_FRAME_RATE || kv.num::<usize>("mel_bins")? != MEL_BINS {
            return Err(config_err!(
                "{context}: frame rate {rate} or mel bins differ from {SPECTRAL_FRAME_RATE}/{MEL_BINS}"
            ));
        }
        let modalities = kv
            .str("modalities")?
            .split(',')
            .map(|m| Modality::parse(m.trim()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            vocabulary: kv
                .str("vocabulary")?
                .split(',')
                .map(|s| s.to_string())
                .collect(),
            pre_audio_dim: kv.num("pre_audio_dim")?,
            pre_visual_dim: kv.num("pre_visual_dim")?,
            modalities,
            features_dir: kv.str("features_dir")?.to_string(),
            weak_labels: kv.str("weak_labels")?.to_string(),
            synth: map
                .iter()
                .filter(|(k, _)| k.starts_with("synth."))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        })
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        Self::parse(&read_text(&path)?, &path.display().to_string())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join(MANIFEST_FILE), &self.to_text())
    }
}
