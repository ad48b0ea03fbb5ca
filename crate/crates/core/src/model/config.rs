use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{config_err, Result};
use crate::kv::{parse_bool, parse_list, parse_num};

/// Mel bins of the spectral input; seven frequency poolings of 2 collapse it to 1.
pub const MEL_BINS: usize = 128;
/// Spectral frames per model output frame (two temporal poolings of 2).
pub const TIME_REDUCTION: usize = 4;
pub const NUM_STACKS: usize = 7;
/// `(time, frequency)` pooling kernel of each convolution stack.
pub const POOL_SCHEDULE: [(usize, usize); NUM_STACKS] =
    [(2, 2), (2, 2), (1, 2), (1, 2), (1, 2), (1, 2), (1, 2)];
pub const DEFAULT_CHANNELS: [usize; NUM_STACKS] = [16, 32, 64, 128, 128, 128, 128];
/// Order in which streams are concatenated before the recurrent layers.
pub const FUSION_ORDER: [&str; 3] = ["spectral", "pre_audio", "pre_visual"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modality {
    Spectral,
    PreAudio,
    PreVisual,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Spectral, Modality::PreAudio, Modality::PreVisual];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Spectral => "spectral",
            Modality::PreAudio => "pre_audio",
            Modality::PreVisual => "pre_visual",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| config_err!("unknown modality {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CrnnConfig {
    pub use_spectral: bool,
    pub use_pre_audio: bool,
    pub use_pre_visual: bool,
    pub n_classes: usize,
    pub pre_audio_dim: usize,
    pub pre_visual_dim: usize,
    pub emb_audio: usize,
    pub emb_visual: usize,
    pub dropout_rate: f64,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub conv_channels: Vec<usize>,
}

impl Default for CrnnConfig {
    fn default() -> Self {
        Self::with_modalities(true, true, true)
    }
}

impl CrnnConfig {
    /// Default sizes with the embedding widths tied to whether the spectral
    /// stream is present: (16, 4) alongside it, (64, 16) without it.
    pub fn with_modalities(spectral: bool, pre_audio: bool, pre_visual: bool) -> Self {
        let (emb_audio, emb_visual) = default_embeddings(spectral);
        Self {
            use_spectral: spectral,
            use_pre_audio: pre_audio,
            use_pre_visual: pre_visual,
            n_classes: 10,
            pre_audio_dim: 128,
            pre_visual_dim: 4096,
            emb_audio,
            emb_visual,
            dropout_rate: 0.33,
            gru_hidden: 128,
            gru_layers: 2,
            conv_channels: DEFAULT_CHANNELS.to_vec(),
        }
    }

    pub fn spectral_only() -> Self {
        Self::with_modalities(true, false, false)
    }

    pub fn modalities(&self) -> Vec<Modality> {
        Modality::ALL
            .into_iter()
            .filter(|m| self.uses(*m))
            .collect()
    }

    pub fn uses(&self, m: Modality) -> bool {
        match m {
            Modality::Spectral => self.use_spectral,
            Modality::PreAudio => self.use_pre_audio,
            Modality::PreVisual => self.use_pre_visual,
        }
    }

    pub fn cnn_dim(&self) -> usize {
        *self.conv_channels.last().unwrap_or(&0)
    }

    /// Width of one stream after encoding/projection.
    pub fn stream_dim(&self, m: Modality) -> usize {
        match m {
            Modality::Spectral => self.cnn_dim(),
            Modality::PreAudio => self.emb_audio,
            Modality::PreVisual => self.emb_visual,
        }
    }

    pub fn fused_dim(&self) -> usize {
        self.modalities()
            .into_iter()
            .map(|m| self.stream_dim(m))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.use_spectral || self.use_pre_audio || self.use_pre_visual) {
            return Err(config_err!("at least one modality must be enabled"));
        }
        if self.n_classes == 0 {
            return Err(config_err!("n_classes must be positive"));
        }
        if self.conv_channels.len() != NUM_STACKS || self.conv_channels.contains(&0) {
            return Err(config_err!(
                "conv_channels needs {NUM_STACKS} positive entries, got {:?}",
                self.conv_channels
            ));
        }
        if self.gru_hidden == 0 || self.gru_layers == 0 {
            return Err(config_err!("gru_hidden and gru_layers must be positive"));
        }
        if self.use_pre_audio && (self.pre_audio_dim == 0 || self.emb_audio == 0) {
            return Err(config_err!("pre_audio_dim and emb_audio must be positive"));
        }
        if self.use_pre_visual && (self.pre_visual_dim == 0 || self.emb_visual == 0) {
            return Err(config_err!(
                "pre_visual_dim and emb_visual must be positive"
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(config_err!("dropout_rate must be in [0,1)"));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        vec![
            ("use_spectral", self.use_spectral.to_string()),
            ("use_pre_audio", self.use_pre_audio.to_string()),
            ("use_pre_visual", self.use_pre_visual.to_string()),
            ("n_classes", self.n_classes.to_string()),
            ("pre_audio_dim", self.pre_audio_dim.to_string()),
            ("pre_visual_dim", self.pre_visual_dim.to_string()),
            ("emb_audio", self.emb_audio.to_string()),
            ("emb_visual", self.emb_visual.to_string()),
            ("dropout_rate", self.dropout_rate.to_string()),
            ("gru_hidden", self.gru_hidden.to_string()),
            ("gru_layers", self.gru_layers.to_string()),
            ("conv_channels", list(&self.conv_channels)),
            ("fusion_order", FUSION_ORDER.join(",")),
        ]
    }

    /// Parses the `key=value` form produced by [`CrnnConfig::to_kv`]. All keys are required.
    pub fn from_kv(text: &str) -> Result<Self> {
        let map: BTreeMap<&str, &str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split_once('=')
                    .ok_or_else(|| config_err!("malformed config line {l:?}"))
            })
            .collect::<Result<_>>()?;
        let get = |k: &str| {
            map.get(k)
                .copied()
                .ok_or_else(|| config_err!("missing model key {k}"))
        };
        let order = get("fusion_order")?;
        if order != FUSION_ORDER.join(",") {
            return Err(config_err!("unsupported fusion order {order}"));
        }
        let cfg = Self {
            use_spectral: parse_bool(get("use_spectral")?)?,
            use_pre_audio: parse_bool(get("use_pre_audio")?)?,
            use_pre_visual: parse_bool(get("use_pre_visual")?)?,
            n_classes: parse_num(get("n_classes")?)?,
            pre_audio_dim: parse_num(get("pre_audio_dim")?)?,
            pre_visual_dim: parse_num(get("pre_visual_dim")?)?,
            emb_audio: parse_num(get("emb_audio")?)?,
            emb_visual: parse_num(get("emb_visual")?)?,
            dropout_rate: parse_num(get("dropout_rate")?)?,
            gru_hidden: parse_num(get("gru_hidden")?)?,
            gru_layers: parse_num(get("gru_layers")?)?,
            conv_channels: parse_list(get("conv_channels")?)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Keys whose values differ between two configs.
    pub fn diff(&self, other: &Self) -> Vec<&'static str> {
        self.entries()
            .into_iter()
            .zip(other.entries())
            .filter(|(a, b)| a.1 != b.1)
            .map(|(a, _)| a.0)
            .collect()
    }
}

pub fn default_embeddings(with_spectral: bool) -> (usize, usize) {
    if with_spectral {
        (16, 4)
    } else {
        (64, 16)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_defaults_follow_spectral_flag() {
        let full = CrnnConfig::default();
        assert_eq!((full.emb_audio, full.emb_visual), (16, 4));
        assert_eq!(full.fused_dim(), 148);
        let visual_only = CrnnConfig::with_modalities(false, false, true);
        assert_eq!(visual_only.emb_visual, 16);
        assert_eq!(
            CrnnConfig::with_modalities(false, true, true).fused_dim(),
            80
        );
        assert_eq!(
            CrnnConfig::with_modalities(true, true, false).fused_dim(),
            144
        );
    }

    #[test]
    fn kv_roundtrip_and_validation() {
        let mut cfg = CrnnConfig::with_modalities(true, false, true);
        cfg.conv_channels = vec![4, 4, 8, 8, 8, 8, 8];
        let back = CrnnConfig::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
        assert!(CrnnConfig::with_modalities(false, false, false)
            .validate()
            .is_err());
        let mut bad = cfg.clone();
        bad.conv_channels.pop();
        assert!(bad.validate().is_err());
        assert_eq!(
            cfg.diff(&CrnnConfig::default()),
            vec!["use_pre_audio", "conv_channels"]
        );
    }
}
