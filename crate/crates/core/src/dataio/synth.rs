//! Synthetic audiovisual feature datasets with known event ground truth.
//!
//! Each class owns a band-shaped template over the mel bins and a direction
//! in each pretrained feature space. Active frames add the class signal on
//! top of Gaussian background noise.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::manifest::{DatasetManifest, Partition};
use super::tsv::{
    write_clip_list, write_strong_tsv, write_text, write_weak_tsv, ClipEntry, StrongAnnotation,
    WeakAnnotation,
};
use super::write_feature_file;
use crate::error::{config_err, Error, Result};
use crate::kv::{parse_bool, parse_num};
use crate::metrics::{tags_of, Event, SPECTRAL_FRAME_RATE};
use crate::model::{MEL_BINS, TIME_REDUCTION};
use crate::tensor::FeatureTensor;

pub const DEFAULT_VOCABULARY: [&str; 10] = [
    "Alarm_bell_ringing",
    "Blender",
    "Cat",
    "Dishes",
    "Dog",
    "Electric_shaver_toothbrush",
    "Frying",
    "Running_water",
    "Speech",
    "Vacuum_cleaner",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_weak: usize,
    pub n_unlabeled: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub clip_duration_s: f64,
    /// Share of clips drawn shorter than `clip_duration_s` (between half and full length).
    pub short_clip_fraction: f64,
    pub vocabulary: Vec<String>,
    pub pre_audio_dim: usize,
    pub pre_visual_dim: usize,
    pub events_min: usize,
    pub events_max: usize,
    pub event_min_s: f64,
    pub event_max_s: f64,
    pub noise_std: f64,
    pub spectral_snr: f64,
    pub audio_snr: f64,
    pub visual_snr: f64,
    pub visual_informative: bool,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_weak: 200,
            n_unlabeled: 200,
            n_val: 100,
            n_test: 100,
            clip_duration_s: 2.5,
            short_clip_fraction: 0.1,
            vocabulary: DEFAULT_VOCABULARY.iter().map(|s| s.to_string()).collect(),
            pre_audio_dim: 128,
            pre_visual_dim: 256,
            events_min: 1,
            events_max: 3,
            event_min_s: 0.5,
            event_max_s: 5.0,
            noise_std: 1.0,
            spectral_snr: 6.0,
            audio_snr: 3.0,
            visual_snr: 3.0,
            visual_informative: true,
            seed: 0,
        }
    }
}

/// Output frames for a clip of `duration_s`, and the duration they cover exactly.
pub fn output_frames_for(duration_s: f64) -> usize {
    ((duration_s * SPECTRAL_FRAME_RATE / TIME_REDUCTION as f64).round() as usize).max(1)
}

fn frame_duration() -> f64 {
    TIME_REDUCTION as f64 / SPECTRAL_FRAME_RATE
}

impl SynthSpec {
    pub fn n_classes(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_weak == 0 {
            return Err(config_err!("n_weak must be positive: weak pool required"));
        }
        if self.vocabulary.is_empty()
            || self
                .vocabulary
                .iter()
                .any(|v| v.is_empty() || v.contains([',', '\t', '\n']))
        {
            return Err(config_err!(
                "vocabulary must be non-empty names without commas, tabs or newlines"
            ));
        }
        if !(self.clip_duration_s > 0.0) {
            return Err(config_err!("clip_duration_s must be positive"));
        }
        if !(0.0..=1.0).contains(&self.short_clip_fraction) {
            return Err(config_err!("short_clip_fraction must be in [0,1]"));
        }
        if !(self.event_min_s > 0.0) || self.event_max_s < self.event_min_s {
            return Err(config_err!("need 0 < event_min_s <= event_max_s"));
        }
        if self.event_min_s > self.clip_duration_s {
            return Err(config_err!(
                "infeasible spec: events of at least {} s do not fit a {} s clip",
                self.event_min_s,
                self.clip_duration_s
            ));
        }
        if self.events_min > self.events_max {
            return Err(config_err!("events_min exceeds events_max"));
        }
        if self.pre_audio_dim == 0 || self.pre_visual_dim == 0 {
            return Err(config_err!("pretrained feature dims must be positive"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(config_err!("noise_std must be non-negative"));
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n_weak", self.n_weak.to_string()),
            ("n_unlabeled", self.n_unlabeled.to_string()),
            ("n_val", self.n_val.to_string()),
            ("n_test", self.n_test.to_string()),
            ("clip_duration_s", self.clip_duration_s.to_string()),
            ("short_clip_fraction", self.short_clip_fraction.to_string()),
            ("vocabulary", self.vocabulary.join(",")),
            ("pre_audio_dim", self.pre_audio_dim.to_string()),
            ("pre_visual_dim", self.pre_visual_dim.to_string()),
            ("events_min", self.events_min.to_string()),
            ("events_max", self.events_max.to_string()),
            ("event_min_s", self.event_min_s.to_string()),
            ("event_max_s", self.event_max_s.to_string()),
            ("noise_std", self.noise_std.to_string()),
            ("spectral_snr", self.spectral_snr.to_string()),
            ("audio_snr", self.audio_snr.to_string()),
            ("visual_snr", self.visual_snr.to_string()),
            ("visual_informative", self.visual_informative.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n_weak" => self.n_weak = parse_num(value)?,
            "n_unlabeled" => self.n_unlabeled = parse_num(value)?,
            "n_val" => self.n_val = parse_num(value)?,
            "n_test" => self.n_test = parse_num(value)?,
            "clip_duration_s" => self.clip_duration_s = parse_num(value)?,
            "short_clip_fraction" => self.short_clip_fraction = parse_num(value)?,
            "vocabulary" => {
                self.vocabulary = value.split(',').map(|s| s.trim().to_string()).collect()
            }
            "pre_audio_dim" => self.pre_audio_dim = parse_num(value)?,
            "pre_visual_dim" => self.pre_visual_dim = parse_num(value)?,
            "events_min" => self.events_min = parse_num(value)?,
            "events_max" => self.events_max = parse_num(value)?,
            "event_min_s" => self.event_min_s = parse_num(value)?,
            "event_max_s" => self.event_max_s = parse_num(value)?,
            "noise_std" => self.noise_std = parse_num(value)?,
            "spectral_snr" => self.spectral_snr = parse_num(value)?,
            "audio_snr" => self.audio_snr = parse_num(value)?,
            "visual_snr" => self.visual_snr = parse_num(value)?,
            "visual_informative" => self.visual_informative = parse_bool(value)?,
            "seed" => self.seed = parse_num(value)?,
            _ => return Err(config_err!("unknown synth key {key}")),
        }
        Ok(())
    }
}

/// Per-class signatures drawn from the seed.
#[derive(Clone, Debug)]
pub struct SynthWorld {
    /// `[n_classes][MEL_BINS]`, unit norm
    pub templates: Vec<Vec<f32>>,
    /// `[n_classes][pre_audio_dim]`, unit norm
    pub audio_dirs: Vec<Vec<f32>>,
    /// `[n_classes][pre_visual_dim]`, unit norm
    pub visual_dirs: Vec<Vec<f32>>,
}

fn normalized(mut v: Vec<f32>) -> Vec<f32> {
    let n = v
        .iter()
        .map(|x| x * x)
        .sum::<f32>()
        .sqrt()
        .max(f32::MIN_POSITIVE);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

impl SynthWorld {
    pub fn new(spec: &SynthSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let c = spec.n_classes();
        let spacing = MEL_BINS as f64 / c as f64;
        let templates = (0..c)
            .map(|k| {
                let centre = (k as f64 + 0.5) * spacing + rng.random_range(-0.15..0.15) * spacing;
                let width = rng.random_range(0.1..0.2) * spacing;
                normalized(
                    (0..MEL_BINS)
                        .map(|b| (-0.5 * ((b as f64 - centre) / width).powi(2)).exp() as f32)
                        .collect(),
                )
            })
            .collect();
        let mut dirs = |d: usize| -> Vec<Vec<f32>> {
            (0..c)
                .map(|_| {
                    normalized(
                        (0..d)
                            .map(|_| rng.sample::<f32, _>(StandardNormal))
                            .collect(),
                    )
                })
                .collect()
        };
        let audio_dirs = dirs(spec.pre_audio_dim);
        let visual_dirs = dirs(spec.pre_visual_dim);
        Self {
            templates,
            audio_dirs,
            visual_dirs,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthClip {
    pub clip_id: String,
    pub duration_s: f64,
    pub events: Vec<Event>,
    /// `[T, 128]`
    pub spectral: FeatureTensor,
    /// `[T/4, pre_audio_dim]`
    pub pre_audio: FeatureTensor,
    /// `[T/4, pre_visual_dim]`
    pub pre_visual: FeatureTensor,
}

impl SynthClip {
    pub fn named_tensors(&self) -> Vec<(String, FeatureTensor)> {
        vec![
            ("spectral".to_string(), self.spectral.clone()),
            ("pre_audio".to_string(), self.pre_audio.clone()),
            ("pre_visual".to_string(), self.pre_visual.clone()),
        ]
    }
}

/// Union of overlapping or touching same-class intervals, sorted by class then onset.
pub fn merge_events(mut events: Vec<Event>) -> Vec<Event> {
    events.sort_by(|a, b| a.class.cmp(&b.class).then(a.onset.total_cmp(&b.onset)));
    let mut out: Vec<Event> = Vec::with_capacity(events.len());
    for e in events {
        match out.last_mut() {
            Some(last) if last.class == e.class && e.onset <= last.offset => {
                last.offset = last.offset.max(e.offset)
            }
            _ => out.push(e),
        }
    }
    out
}

fn clip_rng(seed: u64, partition: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((partition as u64) << 40) | (index as u64 + 1));
    rng
}

/// Frames whose centre lies inside an event of the class.
fn active(events: &[Event], class: usize, centre: f64) -> bool {
    events
        .iter()
        .any(|e| e.class == class && e.onset <= centre && centre < e.offset)
}

pub fn synthesize_clip(
    spec: &SynthSpec,
    world: &SynthWorld,
    clip_id: &str,
    rng: &mut ChaCha8Rng,
) -> SynthClip {
    let full = output_frames_for(spec.clip_duration_s);
    let t_out = if full > 1 && rng.random::<f64>() < spec.short_clip_fraction {
        rng.random_range(full.div_ceil(2)..full)
    } else {
        full
    };
    let d = frame_duration();
    let duration_s = t_out as f64 * d;
    let n_events = rng.random_range(spec.events_min..=spec.events_max);
    let mut events = Vec::with_capacity(n_events);
    let mut gains = BTreeMap::new();
    for _ in 0..n_events {
        let class = rng.random_range(0..spec.n_classes());
        let hi = spec.event_max_s.min(duration_s);
        let lo = spec.event_min_s.min(hi);
        let len = if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            hi
        };
        let onset = if duration_s > len {
            rng.random_range(0.0..=duration_s - len)
        } else {
            0.0
        };
        events.push(Event {
            onset,
            offset: (onset + len).min(duration_s),
            class,
        });
        gains
            .entry(class)
            .or_insert_with(|| rng.random_range(0.7f32..1.3));
    }
    let events = merge_events(events);

    let noise = spec.noise_std as f32;
    let mut gauss = |n: usize| -> Vec<f32> {
        (0..n)
            .map(|_| noise * rng.sample::<f32, _>(StandardNormal))
            .collect()
    };

    let t_spec = t_out * TIME_REDUCTION;
    let mut spectral = gauss(t_spec * MEL_BINS);
    for (f, row) in spectral.chunks_mut(MEL_BINS).enumerate() {
        let centre = (f as f64 + 0.5) / SPECTRAL_FRAME_RATE;
        for (&class, &g) in &gains {
            if active(&events, class, centre) {
                let amp = spec.spectral_snr as f32 * g;
                row.iter_mut()
                    .zip(&world.templates[class])
                    .for_each(|(x, t)| *x += amp * t);
            }
        }
    }
    let mut stream = |dim: usize, dirs: &[Vec<f32>], snr: f64, informative: bool| {
        let mut data = gauss(t_out * dim);
        if informative {
            for (t, row) in data.chunks_mut(dim).enumerate() {
                let centre = (t as f64 + 0.5) * d;
                for (&class, &g) in &gains {
                    if active(&events, class, centre) {
                        let amp = snr as f32 * g;
                        row.iter_mut()
                            .zip(&dirs[class])
                            .for_each(|(x, u)| *x += amp * u);
                    }
                }
            }
        }
        FeatureTensor::from_vec(&[t_out, dim], data).expect("stream shape")
    };
    let pre_audio = stream(spec.pre_audio_dim, &world.audio_dirs, spec.audio_snr, true);
    let pre_visual = stream(
        spec.pre_visual_dim,
        &world.visual_dirs,
        spec.visual_snr,
        spec.visual_informative,
    );
    SynthClip {
        clip_id: clip_id.to_string(),
        duration_s,
        events,
        spectral: FeatureTensor::from_vec(&[t_spec, MEL_BINS], spectral).expect("spectral shape"),
        pre_audio,
        pre_visual,
    }
}

pub fn clip_id(partition: Partition, index: usize) -> String {
    format!("{}_{index:05}", partition.name())
}

/// Clips of one partition, in order.
pub fn synthesize_partition(
    spec: &SynthSpec,
    world: &SynthWorld,
    partition: Partition,
) -> Vec<SynthClip> {
    let n = match partition {
        Partition::Weak => spec.n_weak,
        Partition::Unlabeled => spec.n_unlabeled,
        Partition::Val => spec.n_val,
        Partition::Test => spec.n_test,
    };
    (0..n)
        .map(|i| {
            let mut rng = clip_rng(spec.seed, partition as usize, i);
            synthesize_clip(spec, world, &clip_id(partition, i), &mut rng)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSummary {
    pub counts: Vec<(Partition, usize)>,
}

impl std::fmt::Display for DatasetSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self
            .counts
            .iter()
            .map(|(p, n)| format!("{}={n}", p.name()))
            .collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Writes features, partition lists, weak labels, val/test strong labels, the
/// hidden strong labels of every clip, and the manifest into `dir`.
pub fn synthesize_dataset(spec: &SynthSpec, dir: &Path) -> Result<DatasetSummary> {
    spec.validate()?;
    let manifest = DatasetManifest::for_synth(spec);
    let features = dir.join(&manifest.features_dir);
    let hidden = dir.join("hidden");
    for d in [&features, &hidden] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let world = SynthWorld::new(spec);
    let vocab = &spec.vocabulary;
    let mut all_strong = Vec::new();
    let mut counts = Vec::new();
    for partition in Partition::ALL {
        let clips = synthesize_partition(spec, &world, partition);
        let mut list = Vec::with_capacity(clips.len());
        let mut strong = Vec::new();
        let mut weak = Vec::new();
        for clip in &clips {
            write_feature_file(
                &features.join(format!("{}.ftb", clip.clip_id)),
                &clip.named_tensors(),
            )?;
            list.push(ClipEntry {
                clip_id: clip.clip_id.clone(),
                duration_s: clip.duration_s,
            });
            if !clip.events.is_empty() {
                strong.push(StrongAnnotation {
                    clip_id: clip.clip_id.clone(),
                    events: clip.events.clone(),
                });
            }
            let labels = tags_of(&clip.events);
            if !labels.is_empty() {
                weak.push(WeakAnnotation {
                    clip_id: clip.clip_id.clone(),
                    labels,
                });
            }
        }
        write_text(
            &dir.join(manifest.list_file(partition)),
            &write_clip_list(&list),
        )?;
        match partition {
            Partition::Weak => write_text(
                &dir.join(&manifest.weak_labels),
                &write_weak_tsv(&weak, vocab),
            )?,
            Partition::Val | Partition::Test => write_text(
                &dir.join(manifest.strong_file(partition)),
                &write_strong_tsv(&strong, vocab),
            )?,
            Partition::Unlabeled => {}
        }
        all_strong.extend(strong);
        counts.push((partition, clips.len()));
    }
    write_text(
        &hidden.join("strong_all.tsv"),
        &write_strong_tsv(&all_strong, vocab),
    )?;
    manifest.write(dir)?;
    Ok(DatasetSummary { counts })
}
