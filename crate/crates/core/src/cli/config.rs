use std::path::Path;

use crate::dataio::{DatasetManifest, SynthSpec};
use crate::error::{config_err, Result};
use crate::kv::{format_kv, join_list, parse_bool, parse_kv, parse_list, parse_num};
use crate::meanteacher::{SelectMetric, TrainConfig};
use crate::metrics::{MetricConfig, OffsetRule};
use crate::model::{default_embeddings, CrnnConfig, DEFAULT_CHANNELS};

pub const CONFIG_ECHO_FILE: &str = "run_config.txt";
pub const FUSION_SPECTRAL_SNR: f64 = 0.5;
pub const FUSION_PRETRAINED_SNR: f64 = 4.0;
pub const DESK_CHANNELS: [usize; 7] = [8, 16, 16, 32, 32, 32, 32];

/// Model settings that do not depend on the dataset. Embedding widths left
/// unset follow the modality defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSettings {
    pub use_spectral: bool,
    pub use_pre_audio: bool,
    pub use_pre_visual: bool,
    pub emb_audio: Option<usize>,
    pub emb_visual: Option<usize>,
    pub dropout_rate: f64,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub conv_channels: Vec<usize>,
}

impl ModelSettings {
    fn full() -> Self {
        let base = CrnnConfig::spectral_only();
        Self {
            use_spectral: true,
            use_pre_audio: false,
            use_pre_visual: false,
            emb_audio: None,
            emb_visual: None,
            dropout_rate: base.dropout_rate,
            gru_hidden: base.gru_hidden,
            gru_layers: base.gru_layers,
            conv_channels: DEFAULT_CHANNELS.to_vec(),
        }
    }

    fn desk() -> Self {
        Self {
            conv_channels: DESK_CHANNELS.to_vec(),
            ..Self::full()
        }
    }

    pub fn set_modalities(&mut self, spectral: bool, pre_audio: bool, pre_visual: bool) {
        self.use_spectral = spectral;
        self.use_pre_audio = pre_audio;
        self.use_pre_visual = pre_visual;
    }

    pub fn embeddings(&self) -> (usize, usize) {
        let (a, v) = default_embeddings(self.use_spectral);
        (self.emb_audio.unwrap_or(a), self.emb_visual.unwrap_or(v))
    }

    /// Full model configuration for a dataset.
    pub fn resolve(&self, manifest: &DatasetManifest) -> Result<CrnnConfig> {
        let (emb_audio, emb_visual) = self.embeddings();
        let config = CrnnConfig {
            use_spectral: self.use_spectral,
            use_pre_audio: self.use_pre_audio,
            use_pre_visual: self.use_pre_visual,
            n_classes: manifest.n_classes(),
            pre_audio_dim: manifest.pre_audio_dim,
            pre_visual_dim: manifest.pre_visual_dim,
            emb_audio,
            emb_visual,
            dropout_rate: self.dropout_rate,
            gru_hidden: self.gru_hidden,
            gru_layers: self.gru_layers,
            conv_channels: self.conv_channels.clone(),
        };
        config.validate()?;
        for m in config.modalities() {
            if !manifest.has(m) {
                return Err(config_err!(
                    "model uses {} but the dataset does not provide it",
                    m.name()
                ));
            }
        }
        Ok(config)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let (a, v) = self.embeddings();
        vec![
            ("use_spectral", self.use_spectral.to_string()),
            ("use_pre_audio", self.use_pre_audio.to_string()),
            ("use_pre_visual", self.use_pre_visual.to_string()),
            ("emb_audio", a.to_string()),
            ("emb_visual", v.to_string()),
            ("dropout_rate", self.dropout_rate.to_string()),
            ("gru_hidden", self.gru_hidden.to_string()),
            ("gru_layers", self.gru_layers.to_string()),
            ("conv_channels", join_list(&self.conv_channels)),
        ]
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let emb = |v: &str| -> Result<Option<usize>> {
            if v == "auto" {
                Ok(None)
            } else {
                parse_num(v).map(Some)
            }
        };
        match key {
            "use_spectral" => self.use_spectral = parse_bool(value)?,
            "use_pre_audio" => self.use_pre_audio = parse_bool(value)?,
            "use_pre_visual" => self.use_pre_visual = parse_bool(value)?,
            "emb_audio" => self.emb_audio = emb(value)?,
            "emb_visual" => self.emb_visual = emb(value)?,
            "dropout_rate" => self.dropout_rate = parse_num(value)?,
            "gru_hidden" => self.gru_hidden = parse_num(value)?,
            "gru_layers" => self.gru_layers = parse_num(value)?,
            "conv_channels" => self.conv_channels = parse_list(value)?,
            _ => return Err(config_err!("unknown key model.{key}")),
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSettings {
    pub n_seeds: usize,
    pub k_best: usize,
    pub select_metric: SelectMetric,
}

/// Every setting of a run, as flat `section.key=value` pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub profile: String,
    pub seed: u64,
    pub synth: SynthSpec,
    pub model: ModelSettings,
    pub train: TrainConfig,
    pub metric: MetricConfig,
    pub experiment: ExperimentSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl RunConfig {
    pub fn desk() -> Self {
        Self {
            profile: "desk".into(),
            seed: 0,
            synth: SynthSpec::default(),
            model: ModelSettings::desk(),
            train: TrainConfig::desk(),
            metric: MetricConfig::default(),
            experiment: ExperimentSettings {
                n_seeds: 5,
                k_best: 2,
                select_metric: SelectMetric::Clip,
            },
        }
    }

    /// Full-scale training and model sizes; the synthetic data settings stay at desk scale.
    pub fn full() -> Self {
        Self {
            profile: "full".into(),
            model: ModelSettings::full(),
            train: TrainConfig::full(),
            experiment: ExperimentSettings {
                n_seeds: 20,
                k_best: 5,
                select_metric: SelectMetric::Clip,
            },
            ..Self::desk()
        }
    }

    /// Desk scale on data whose pretrained streams carry more class evidence
    /// than the spectral stream.
    pub fn fusion() -> Self {
        let mut config = Self::desk();
        config.profile = "fusion".into();
        config.synth.spectral_snr = FUSION_SPECTRAL_SNR;
        config.synth.audio_snr = FUSION_PRETRAINED_SNR;
        config.synth.visual_snr = FUSION_PRETRAINED_SNR;
        config
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            "fusion" => Ok(Self::fusion()),
            other => Err(config_err!(
                "unknown profile {other:?} (expected desk, full or fusion)"
            )),
        }
    }

    /// Resolved settings in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("profile".to_string(), self.profile.clone()),
            ("seed".to_string(), self.seed.to_string()),
        ];
        let section =
            |out: &mut Vec<(String, String)>, name: &str, entries: Vec<(&'static str, String)>| {
                out.extend(entries.into_iter().map(|(k, v)| (format!("{name}.{k}"), v)));
            };
        section(
            &mut out,
            "synth",
            self.synth
                .entries()
                .into_iter()
                .filter(|(k, _)| *k != "seed")
                .collect(),
        );
        section(&mut out, "model", self.model.entries());
        section(&mut out, "train", self.train.entries());
        let m = &self.metric;
        section(
            &mut out,
            "metric",
            vec![
                ("threshold", m.threshold.to_string()),
                ("median_window", m.median_window.to_string()),
                ("segment_s", m.segment_s.to_string()),
                ("onset_collar_s", m.collars.onset_s.to_string()),
                ("offset_collar_ratio", m.collars.offset_ratio.to_string()),
                ("offset_collar_s", m.collars.offset_s.to_string()),
                (
                    "offset_collar_rule",
                    m.collars.offset_rule.name().to_string(),
                ),
            ],
        );
        let e = &self.experiment;
        section(
            &mut out,
            "experiment",
            vec![
                ("n_seeds", e.n_seeds.to_string()),
                ("k_best", e.k_best.to_string()),
                ("select_metric", e.select_metric.name().to_string()),
            ],
        );
        out
    }

    pub fn to_text(&self) -> String {
        format_kv(&self.entries())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let wrap = |r: Result<()>| r.map_err(|e| config_err!("{key}: {e}"));
        match key.split_once('.') {
            None => match key {
                "seed" => self.seed = parse_num(value).map_err(|e| config_err!("{key}: {e}"))?,
                "profile" => {
                    if value != self.profile {
                        return Err(config_err!("profile must be the first setting applied"));
                    }
                }
                _ => return Err(config_err!("unknown key {key:?}")),
            },
            Some(("synth", k)) if k != "seed" => wrap(self.synth.set(k, value))?,
            Some(("model", k)) => wrap(self.model.set(k, value))?,
            Some(("train", k)) => wrap(self.train.set(k, value))?,
            Some(("metric", k)) => {
                let m = &mut self.metric;
                match k {
                    "threshold" => m.threshold = parse_num(value)?,
                    "median_window" => m.median_window = parse_num(value)?,
                    "segment_s" => m.segment_s = parse_num(value)?,
                    "onset_collar_s" => m.collars.onset_s = parse_num(value)?,
                    "offset_collar_ratio" => m.collars.offset_ratio = parse_num(value)?,
                    "offset_collar_s" => m.collars.offset_s = parse_num(value)?,
                    "offset_collar_rule" => m.collars.offset_rule = OffsetRule::parse(value)?,
                    _ => return Err(config_err!("unknown key {key:?}")),
                }
            }
            Some(("experiment", k)) => {
                let e = &mut self.experiment;
                match k {
                    "n_seeds" => e.n_seeds = parse_num(value)?,
                    "k_best" => e.k_best = parse_num(value)?,
                    "select_metric" => e.select_metric = SelectMetric::parse(value)?,
                    _ => return Err(config_err!("unknown key {key:?}")),
                }
            }
            _ => return Err(config_err!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Applies `pairs` over the profile they name (desk when absent).
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let profile = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "profile")
            .map_or("desk", |(_, v)| v.as_str());
        let mut config = Self::profile(profile.trim())?;
        for (k, v) in pairs.iter().filter(|(k, _)| k != "profile") {
            config.set(k.trim(), v)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let pairs: Vec<(String, String)> = parse_kv(text, context)?.into_iter().collect();
        Self::from_pairs(&pairs).map_err(|e| config_err!("{context}: {e}"))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(
            &crate::dataio::read_text(path)?,
            &path.display().to_string(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        if self.metric.threshold <= 0.0 || self.metric.threshold >= 1.0 {
            return Err(config_err!("metric.threshold must be in (0,1)"));
        }
        if self.metric.median_window == 0 || self.metric.median_window.is_multiple_of(2) {
            return Err(config_err!("metric.median_window must be odd and positive"));
        }
        if self.metric.segment_s <= 0.0 {
            return Err(config_err!("metric.segment_s must be positive"));
        }
        let e = &self.experiment;
        if e.k_best == 0 || e.k_best > e.n_seeds {
            return Err(config_err!(
                "experiment.k_best must be in 1..=n_seeds ({})",
                e.n_seeds
            ));
        }
        let m = &self.model;
        if !(m.use_spectral || m.use_pre_audio || m.use_pre_visual) {
            return Err(config_err!("at least one modality must be enabled"));
        }
        Ok(())
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            seed: self.seed,
            ..self.synth.clone()
        }
    }
}
