//! Decisions, event decoding, and clip / segment / event F1 scoring.

mod postprocess;
mod scoring;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

pub use postprocess::{
    decode_events, median_filter, rasterize, threshold, FrameDecisions, DEFAULT_MEDIAN_WINDOW,
    DEFAULT_THRESHOLD,
};
pub use scoring::{
    clip_micro_f1, clip_to_duration, event_macro_f1, match_events, segment_count, segment_micro_f1,
    Collars, OffsetRule, DEFAULT_SEGMENT_S,
};

use crate::error::{data_err, Result};
use crate::model::TIME_REDUCTION;

/// Spectral frames per second of the feature front end.
pub const SPECTRAL_FRAME_RATE: f64 = 60.4;

/// Seconds per model output frame.
pub fn output_frame_duration() -> f64 {
    TIME_REDUCTION as f64 / SPECTRAL_FRAME_RATE
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub onset: f64,
    pub offset: f64,
    pub class: usize,
}

pub type EventMap = BTreeMap<String, Vec<Event>>;
pub type TagMap = BTreeMap<String, BTreeSet<usize>>;

/// Classes that have at least one event.
pub fn tags_of(events: &[Event]) -> BTreeSet<usize> {
    events.iter().map(|e| e.class).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassScore {
    pub class: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchPair {
    pub clip_id: String,
    pub reference: Event,
    pub predicted: Event,
}

/// Counts and scores at one granularity. Ratios with a zero denominator are 0.
#[derive(Clone, Debug, PartialEq)]
pub struct F1Report {
    pub metric: String,
    pub macro_averaged: bool,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassScore>,
    pub pairs: Vec<MatchPair>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn scores(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    (
        ratio(tp, tp + fp),
        ratio(tp, tp + fn_),
        ratio(2 * tp, 2 * tp + fp + fn_),
    )
}

impl F1Report {
    fn class_scores(counts: &[[usize; 3]]) -> Vec<ClassScore> {
        counts
            .iter()
            .enumerate()
            .map(|(class, &[tp, fp, fn_])| {
                let (precision, recall, f1) = scores(tp, fp, fn_);
                ClassScore {
                    class,
                    tp,
                    fp,
                    fn_,
                    precision,
                    recall,
                    f1,
                }
            })
            .collect()
    }

    fn totals(counts: &[[usize; 3]]) -> [usize; 3] {
        counts
            .iter()
            .fold([0; 3], |a, c| [a[0] + c[0], a[1] + c[1], a[2] + c[2]])
    }

    /// Scores from the pooled counts.
    pub fn micro(metric: &str, per_class: &[[usize; 3]]) -> Self {
        let [tp, fp, fn_] = Self::totals(per_class);
        let (precision, recall, f1) = scores(tp, fp, fn_);
        Self {
            metric: metric.to_string(),
            macro_averaged: false,
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
            per_class: Self::class_scores(per_class),
            pairs: Vec::new(),
        }
    }

    /// Mean of per-class scores over classes with any reference or prediction.
    pub fn macro_avg(metric: &str, per_class: &[[usize; 3]]) -> Self {
        let [tp, fp, fn_] = Self::totals(per_class);
        let classes = Self::class_scores(per_class);
        let active: Vec<&ClassScore> = classes.iter().filter(|c| c.tp + c.fp + c.fn_ > 0).collect();
        let mean = |f: fn(&ClassScore) -> f64| {
            if active.is_empty() {
                0.0
            } else {
                active.iter().map(|c| f(c)).sum::<f64>() / active.len() as f64
            }
        };
        Self {
            metric: metric.to_string(),
            macro_averaged: true,
            tp,
            fp,
            fn_,
            precision: mean(|c| c.precision),
            recall: mean(|c| c.recall),
            f1: mean(|c| c.f1),
            per_class: classes,
            pairs: Vec::new(),
        }
    }

    fn line(name: &str, p: f64, r: f64, f: f64, tp: usize, fp: usize, fn_: usize) -> String {
        format!("{name}\t{p:.6}\t{r:.6}\t{f:.6}\t{tp}\t{fp}\t{fn_}\n")
    }

    /// `metric<TAB>precision<TAB>recall<TAB>f1<TAB>tp<TAB>fp<TAB>fn`, followed for
    /// macro reports by one `metric:class` line per scored class.
    pub fn to_text(&self, vocab: &[String]) -> String {
        let mut s = Self::line(
            &self.metric,
            self.precision,
            self.recall,
            self.f1,
            self.tp,
            self.fp,
            self.fn_,
        );
        if self.macro_averaged {
            for c in self.per_class.iter().filter(|c| c.tp + c.fp + c.fn_ > 0) {
                let name = vocab
                    .get(c.class)
                    .map_or_else(|| c.class.to_string(), |n| n.clone());
                s.push_str(&Self::line(
                    &format!("{}:{name}", self.metric),
                    c.precision,
                    c.recall,
                    c.f1,
                    c.tp,
                    c.fp,
                    c.fn_,
                ));
            }
        }
        s
    }
}

pub const REPORT_HEADER: &str = "metric\tprecision\trecall\tf1\ttp\tfp\tfn";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricConfig {
    pub threshold: f64,
    pub median_window: usize,
    pub segment_s: f64,
    pub collars: Collars,
    pub frame_duration_s: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            median_window: DEFAULT_MEDIAN_WINDOW,
            segment_s: DEFAULT_SEGMENT_S,
            collars: Collars::default(),
            frame_duration_s: output_frame_duration(),
        }
    }
}

/// Model output for one clip, restricted to its valid frames.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipPrediction {
    pub clip_id: String,
    pub duration_s: f64,
    /// Row-major `[n_frames, n_classes]`.
    pub frame_probs: Vec<f32>,
    pub n_frames: usize,
    pub clip_probs: Vec<f32>,
}

/// Clip tags from thresholded clip probabilities, events from thresholded,
/// median-filtered frame decisions.
pub fn postprocess_clip(
    pred: &ClipPrediction,
    config: &MetricConfig,
) -> Result<(BTreeSet<usize>, Vec<Event>)> {
    let n_classes = pred.clip_probs.len();
    let tags = threshold(&pred.clip_probs, config.threshold)
        .iter()
        .enumerate()
        .filter(|(_, &d)| d == 1)
        .map(|(c, _)| c)
        .collect();
    let decisions = FrameDecisions::from_probs(
        &pred.frame_probs,
        pred.n_frames,
        n_classes,
        config.frame_duration_s,
        config.threshold,
        config.median_window,
    )?;
    Ok((tags, decode_events(&decisions)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub clip: F1Report,
    pub segment: F1Report,
    pub event: F1Report,
}

impl EvalReport {
    pub fn to_text(&self, vocab: &[String]) -> String {
        let mut s = format!("{REPORT_HEADER}\n");
        for r in [&self.clip, &self.segment, &self.event] {
            s.push_str(&r.to_text(vocab));
        }
        s
    }

    /// Clip, segment and event F1 in percent.
    pub fn table_row(&self) -> String {
        format!(
            "{:.2}%\t{:.2}%\t{:.2}%",
            100.0 * self.clip.f1,
            100.0 * self.segment.f1,
            100.0 * self.event.f1
        )
    }

    pub fn matching_pairs_text(&self, vocab: &[String]) -> String {
        let mut s =
            String::from("clip_id\tref_onset\tref_offset\tpred_onset\tpred_offset\tlabel\n");
        for p in &self.event.pairs {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}",
                p.clip_id,
                p.reference.onset,
                p.reference.offset,
                p.predicted.onset,
                p.predicted.offset,
                vocab.get(p.reference.class).map_or("?", |v| v.as_str())
            );
        }
        s
    }
}

/// Score predicted tags and events against reference events. `durations` is
/// the clip universe; reference tags are the classes with a reference event.
pub fn score(
    predicted_tags: &TagMap,
    predicted_events: &EventMap,
    reference: &EventMap,
    durations: &BTreeMap<String, f64>,
    n_classes: usize,
    config: &MetricConfig,
) -> Result<EvalReport> {
    for clip in reference.keys() {
        if !durations.contains_key(clip) {
            return Err(data_err!(
                "clip universe mismatch: reference clip {clip} is not in the clip list"
            ));
        }
    }
    let ref_tags: TagMap = durations
        .keys()
        .map(|c| {
            (
                c.clone(),
                reference.get(c).map(|e| tags_of(e)).unwrap_or_default(),
            )
        })
        .collect();
    let ref_events: EventMap = durations
        .iter()
        .map(|(c, &d)| {
            (
                c.clone(),
                clip_to_duration(c, reference.get(c).map_or(&[][..], |v| v), d),
            )
        })
        .collect();
    Ok(EvalReport {
        clip: clip_micro_f1(predicted_tags, &ref_tags, n_classes)?,
        segment: segment_micro_f1(
            predicted_events,
            &ref_events,
            durations,
            n_classes,
            config.segment_s,
        )?,
        event: event_macro_f1(predicted_events, &ref_events, n_classes, &config.collars)?,
    })
}

/// threshold, median filter, decode, then score.
pub fn evaluate_run(
    predictions: &[ClipPrediction],
    reference: &EventMap,
    n_classes: usize,
    config: &MetricConfig,
) -> Result<EvalReport> {
    let mut tags = TagMap::new();
    let mut events = EventMap::new();
    let mut durations = BTreeMap::new();
    for p in predictions {
        if p.clip_probs.len() != n_classes {
            return Err(data_err!(
                "{}: {} clip probabilities, expected {n_classes}",
                p.clip_id,
                p.clip_probs.len()
            ));
        }
        let (t, e) = postprocess_clip(p, config)?;
        tags.insert(p.clip_id.clone(), t);
        events.insert(p.clip_id.clone(), e);
        durations.insert(p.clip_id.clone(), p.duration_s);
    }
    score(&tags, &events, reference, &durations, n_classes, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle(
        events: &[Event],
        n_frames: usize,
        n_classes: usize,
        d: f64,
        invert: bool,
    ) -> ClipPrediction {
        let r = rasterize(events, n_frames, n_classes, d).unwrap();
        let tags = tags_of(events);
        // the inverted model is active exactly on the classes the clip lacks
        let frame_probs = if invert {
            (0..n_frames * n_classes)
                .map(|i| f32::from(!tags.contains(&(i % n_classes))))
                .collect()
        } else {
            r.data.iter().map(|&v| f32::from(v)).collect()
        };
        let clip_probs = (0..n_classes)
            .map(|c| f32::from(tags.contains(&c) != invert))
            .collect();
        ClipPrediction {
            clip_id: "a".into(),
            duration_s: n_frames as f64 * d,
            frame_probs,
            n_frames,
            clip_probs,
        }
    }

    #[test]
    fn oracle_and_inverted_oracle() {
        let cfg = MetricConfig::default();
        let d = cfg.frame_duration_s;
        // event boundaries on the frame grid, lengths well above the median window
        let events = vec![
            Event {
                onset: 10.0 * d,
                offset: 40.0 * d,
                class: 0,
            },
            Event {
                onset: 60.0 * d,
                offset: 100.0 * d,
                class: 1,
            },
        ];
        let reference = EventMap::from([("a".to_string(), events.clone())]);
        let good = evaluate_run(&[oracle(&events, 151, 3, d, false)], &reference, 3, &cfg).unwrap();
        assert_eq!(
            (good.clip.f1, good.segment.f1, good.event.f1),
            (1.0, 1.0, 1.0)
        );
        let bad = evaluate_run(&[oracle(&events, 151, 3, d, true)], &reference, 3, &cfg).unwrap();
        assert_eq!((bad.clip.f1, bad.segment.f1, bad.event.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn zero_weight_probabilities_predict_silence() {
        let p = ClipPrediction {
            clip_id: "a".into(),
            duration_s: 2.0,
            frame_probs: vec![0.5; 30 * 2],
            n_frames: 30,
            clip_probs: vec![0.5; 2],
        };
        let (tags, events) = postprocess_clip(&p, &MetricConfig::default()).unwrap();
        assert!(tags.is_empty() && events.is_empty());
    }

    #[test]
    fn report_text_layout() {
        let r = F1Report::macro_avg("event", &[[1, 0, 1], [0, 0, 0]]);
        let vocab = vec!["Dog".to_string(), "Cat".to_string()];
        let text = r.to_text(&vocab);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "event\t1.000000\t0.500000\t0.666667\t1\t0\t1");
        assert!(lines[1].starts_with("event:Dog\t"));
    }
}
