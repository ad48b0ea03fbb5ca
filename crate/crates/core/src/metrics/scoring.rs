use std::collections::{BTreeMap, BTreeSet};

use super::{Event, EventMap, F1Report, MatchPair, TagMap};
use crate::error::{config_err, data_err, Result};

pub const DEFAULT_SEGMENT_S: f64 = 1.0;

/// How the offset tolerance combines the fixed collar with the length ratio.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OffsetRule {
    /// `max(offset_s, ratio * len)`
    Max,
    /// `min(offset_s, ratio * len)`
    Min,
}

impl OffsetRule {
    pub fn name(self) -> &'static str {
        match self {
            OffsetRule::Max => "max",
            OffsetRule::Min => "min",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(OffsetRule::Max),
            "min" => Ok(OffsetRule::Min),
            _ => Err(config_err!(
                "offset collar rule must be max or min, got {s:?}"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Collars {
    pub onset_s: f64,
    pub offset_ratio: f64,
    pub offset_s: f64,
    pub offset_rule: OffsetRule,
}

impl Default for Collars {
    fn default() -> Self {
        Self {
            onset_s: 0.2,
            offset_ratio: 0.2,
            offset_s: 0.2,
            offset_rule: OffsetRule::Max,
        }
    }
}

impl Collars {
    pub fn offset_tolerance(&self, reference: &Event) -> f64 {
        let rel = self.offset_ratio * (reference.offset - reference.onset);
        match self.offset_rule {
            OffsetRule::Max => self.offset_s.max(rel),
            OffsetRule::Min => self.offset_s.min(rel),
        }
    }

    pub fn matches(&self, reference: &Event, predicted: &Event) -> bool {
        reference.class == predicted.class
            && (predicted.onset - reference.onset).abs() <= self.onset_s
            && (predicted.offset - reference.offset).abs() <= self.offset_tolerance(reference)
    }
}

fn check_universe<'a>(
    a: impl Iterator<Item = &'a String>,
    b: impl Iterator<Item = &'a String>,
) -> Result<()> {
    let a: BTreeSet<&String> = a.collect();
    let b: BTreeSet<&String> = b.collect();
    if a != b {
        let diff: Vec<&str> = a.symmetric_difference(&b).map(|s| s.as_str()).collect();
        return Err(data_err!("clip universe mismatch: {}", diff.join(", ")));
    }
    Ok(())
}

/// Micro F1 over all (clip, class) pairs. Both sides must list the same clips.
pub fn clip_micro_f1(predicted: &TagMap, reference: &TagMap, n_classes: usize) -> Result<F1Report> {
    check_universe(predicted.keys(), reference.keys())?;
    let mut per_class = vec![[0usize; 3]; n_classes];
    for (clip, ref_tags) in reference {
        let pred_tags = &predicted[clip];
        for &c in pred_tags.union(ref_tags) {
            let slot = per_class
                .get_mut(c)
                .ok_or_else(|| data_err!("{clip}: class {c} out of range"))?;
            match (pred_tags.contains(&c), ref_tags.contains(&c)) {
                (true, true) => slot[0] += 1,
                (true, false) => slot[1] += 1,
                _ => slot[2] += 1,
            }
        }
    }
    Ok(F1Report::micro("clip", &per_class))
}

/// Index range of the segments of a `duration`-long clip that an interval
/// overlaps with positive length.
fn overlapped_segments(
    onset: f64,
    offset: f64,
    segment_s: f64,
    duration: f64,
    n_segments: usize,
) -> Vec<usize> {
    let first = ((onset / segment_s).floor() as isize - 1).max(0) as usize;
    let last = (((offset / segment_s).ceil() as usize) + 1).min(n_segments);
    (first..last)
        .filter(|&k| {
            let start = k as f64 * segment_s;
            let end = ((k + 1) as f64 * segment_s).min(duration);
            offset.min(end) > onset.max(start)
        })
        .collect()
}

pub fn segment_count(duration: f64, segment_s: f64) -> usize {
    ((duration / segment_s).ceil() as usize).max(1)
}

/// Keep the part of each event inside `[0, duration]`.
pub fn clip_to_duration(clip: &str, events: &[Event], duration: f64) -> Vec<Event> {
    let mut out = Vec::with_capacity(events.len());
    for e in events {
        if e.offset > duration + 1e-9 || e.onset < 0.0 {
            log::warn!(
                "{clip}: event ({}, {}) extends beyond [0, {duration}], clipped",
                e.onset,
                e.offset
            );
        }
        let (on, off) = (e.onset.max(0.0), e.offset.min(duration));
        if off > on {
            out.push(Event {
                onset: on,
                offset: off,
                class: e.class,
            });
        }
    }
    out
}

/// Micro F1 over 1 s (by default) segments pooled across all clips and classes.
/// A class is active in a segment when one of its events overlaps it with
/// positive length. The trailing partial segment is scored.
pub fn segment_micro_f1(
    predicted: &EventMap,
    reference: &EventMap,
    durations: &BTreeMap<String, f64>,
    n_classes: usize,
    segment_s: f64,
) -> Result<F1Report> {
    if !(segment_s > 0.0) {
        return Err(config_err!("segment length must be positive"));
    }
    for clip in predicted.keys().chain(reference.keys()) {
        if !durations.contains_key(clip) {
            return Err(data_err!(
                "clip universe mismatch: {clip} has no known duration"
            ));
        }
    }
    let empty = Vec::new();
    let mut per_class = vec![[0usize; 3]; n_classes];
    for (clip, &duration) in durations {
        let n_seg = segment_count(duration, segment_s);
        let activity = |events: &[Event]| -> Result<Vec<bool>> {
            let mut act = vec![false; n_seg * n_classes];
            for e in clip_to_duration(clip, events, duration) {
                if e.class >= n_classes {
                    return Err(data_err!("{clip}: class {} out of range", e.class));
                }
                for k in overlapped_segments(e.onset, e.offset, segment_s, duration, n_seg) {
                    act[k * n_classes + e.class] = true;
                }
            }
            Ok(act)
        };
        let p = activity(predicted.get(clip).unwrap_or(&empty))?;
        let r = activity(reference.get(clip).unwrap_or(&empty))?;
        for (i, (&pa, &ra)) in p.iter().zip(&r).enumerate() {
            let slot = &mut per_class[i % n_classes];
            match (pa, ra) {
                (true, true) => slot[0] += 1,
                (true, false) => slot[1] += 1,
                (false, true) => slot[2] += 1,
                _ => {}
            }
        }
    }
    Ok(F1Report::micro("segment", &per_class))
}

/// One-to-one matching of same-class events under the collars. Seeded
/// greedily (references by onset, each taking the earliest-onset unmatched
/// compatible prediction) and completed with augmenting paths so the result
/// has maximum cardinality. Returns `(reference index, prediction index)`.
pub fn match_events(
    reference: &[Event],
    predicted: &[Event],
    collars: &Collars,
) -> Vec<(usize, usize)> {
    let mut ref_order: Vec<usize> = (0..reference.len()).collect();
    ref_order.sort_by(|&a, &b| {
        reference[a]
            .onset
            .total_cmp(&reference[b].onset)
            .then(a.cmp(&b))
    });
    let mut pred_order: Vec<usize> = (0..predicted.len()).collect();
    pred_order.sort_by(|&a, &b| {
        predicted[a]
            .onset
            .total_cmp(&predicted[b].onset)
            .then(a.cmp(&b))
    });

    let adj: Vec<Vec<usize>> = ref_order
        .iter()
        .map(|&r| {
            pred_order
                .iter()
                .copied()
                .filter(|&p| collars.matches(&reference[r], &predicted[p]))
                .collect()
        })
        .collect();

    let mut owner: Vec<Option<usize>> = vec![None; predicted.len()];
    let mut matched = vec![false; ref_order.len()];
    for (i, cands) in adj.iter().enumerate() {
        if let Some(&p) = cands.iter().find(|&&p| owner[p].is_none()) {
            owner[p] = Some(i);
            matched[i] = true;
        }
    }

    fn augment(
        i: usize,
        adj: &[Vec<usize>],
        owner: &mut [Option<usize>],
        seen: &mut [bool],
    ) -> bool {
        for &p in &adj[i] {
            if seen[p] {
                continue;
            }
            seen[p] = true;
            if owner[p].is_none_or(|j| augment(j, adj, owner, seen)) {
                owner[p] = Some(i);
                return true;
            }
        }
        false
    }
    for (i, done) in matched.iter_mut().enumerate() {
        if !*done {
            let mut seen = vec![false; predicted.len()];
            *done = augment(i, &adj, &mut owner, &mut seen);
        }
    }

    let mut pairs: Vec<(usize, usize)> = owner
        .iter()
        .enumerate()
        .filter_map(|(p, o)| o.map(|i| (ref_order[i], p)))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Per-class F1 from collar-matched events, macro-averaged over the classes
/// that have at least one reference or predicted event.
pub fn event_macro_f1(
    predicted: &EventMap,
    reference: &EventMap,
    n_classes: usize,
    collars: &Collars,
) -> Result<F1Report> {
    let clips: BTreeSet<&String> = predicted.keys().chain(reference.keys()).collect();
    let empty = Vec::new();
    let mut per_class = vec![[0usize; 3]; n_classes];
    let mut pairs = Vec::new();
    for clip in clips {
        let refs = reference.get(clip).unwrap_or(&empty);
        let preds = predicted.get(clip).unwrap_or(&empty);
        for e in refs.iter().chain(preds) {
            if e.class >= n_classes {
                return Err(data_err!("{clip}: class {} out of range", e.class));
            }
        }
        for (class, slot) in per_class.iter_mut().enumerate() {
            let r: Vec<Event> = refs.iter().filter(|e| e.class == class).copied().collect();
            let p: Vec<Event> = preds.iter().filter(|e| e.class == class).copied().collect();
            let m = match_events(&r, &p, collars);
            slot[0] += m.len();
            slot[1] += p.len() - m.len();
            slot[2] += r.len() - m.len();
            pairs.extend(m.into_iter().map(|(ri, pi)| MatchPair {
                clip_id: clip.clone(),
                reference: r[ri],
                predicted: p[pi],
            }));
        }
    }
    let mut report = F1Report::macro_avg("event", &per_class);
    report.pairs = pairs;
    Ok(report)
}
