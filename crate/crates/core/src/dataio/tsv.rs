//! Tab-separated annotation files: UTF-8, `\t` separators, `\n` line ends,
//! `.` decimal point.
//!
//! Strong: `clip_id<TAB>onset<TAB>offset<TAB>label`, optional header (a first
//! line whose second field is not a number).
//! Weak: `clip_id<TAB>label,label,...`, optional `filename<TAB>event_labels` header.
//! Clip lists: `clip_id<TAB>duration_s`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::Event;

pub const STRONG_HEADER: &str = "filename\tonset\toffset\tevent_label";
pub const WEAK_HEADER: &str = "filename\tevent_labels";

#[derive(Clone, Debug, PartialEq)]
pub struct StrongAnnotation {
    pub clip_id: String,
    pub events: Vec<Event>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeakAnnotation {
    pub clip_id: String,
    /// Class indices into the vocabulary.
    pub labels: BTreeSet<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClipEntry {
    pub clip_id: String,
    pub duration_s: f64,
}

fn line_err(context: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Data(format!("{context}: {}, line {line}", message.into()))
}

fn class_index(vocab: &[String], label: &str, context: &str, line: usize) -> Result<usize> {
    vocab.iter().position(|v| v == label).ok_or_else(|| {
        line_err(
            context,
            line,
            format!("unknown label {label:?} (vocabulary: {})", vocab.join(", ")),
        )
    })
}

pub fn parse_strong_tsv(
    text: &str,
    vocab: &[String],
    context: &str,
) -> Result<Vec<StrongAnnotation>> {
    let mut out: Vec<StrongAnnotation> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if i == 0
            && fields
                .get(1)
                .is_some_and(|f| f.trim().parse::<f64>().is_err())
        {
            continue;
        }
        if fields.len() != 4 {
            return Err(line_err(
                context,
                lineno,
                format!("expected 4 fields, got {}", fields.len()),
            ));
        }
        let num = |s: &str, what: &str| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| line_err(context, lineno, format!("bad {what} {s:?}")))
        };
        let onset = num(fields[1], "onset")?;
        let offset = num(fields[2], "offset")?;
        if onset < 0.0 {
            return Err(line_err(context, lineno, "negative onset"));
        }
        if offset <= onset {
            return Err(line_err(context, lineno, "offset before onset"));
        }
        let class = class_index(vocab, fields[3].trim(), context, lineno)?;
        let event = Event {
            onset,
            offset,
            class,
        };
        let clip_id = fields[0];
        match out.iter_mut().find(|a| a.clip_id == clip_id) {
            Some(a) => a.events.push(event),
            None => out.push(StrongAnnotation {
                clip_id: clip_id.to_string(),
                events: vec![event],
            }),
        }
    }
    Ok(out)
}

pub fn write_strong_tsv(annotations: &[StrongAnnotation], vocab: &[String]) -> String {
    let mut s = String::from(STRONG_HEADER);
    s.push('\n');
    for a in annotations {
        for e in &a.events {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}",
                a.clip_id, e.onset, e.offset, vocab[e.class]
            );
        }
    }
    s
}

pub fn parse_weak_tsv(text: &str, vocab: &[String], context: &str) -> Result<Vec<WeakAnnotation>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() || (i == 0 && line.trim_end() == WEAK_HEADER) {
            continue;
        }
        let (clip_id, labels) = line
            .split_once('\t')
            .ok_or_else(|| line_err(context, lineno, "no labels"))?;
        let labels = labels
            .split(',')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| class_index(vocab, l, context, lineno))
            .collect::<Result<BTreeSet<usize>>>()?;
        if labels.is_empty() {
            return Err(line_err(context, lineno, "no labels"));
        }
        out.push(WeakAnnotation {
            clip_id: clip_id.to_string(),
            labels,
        });
    }
    Ok(out)
}

pub fn write_weak_tsv(annotations: &[WeakAnnotation], vocab: &[String]) -> String {
    let mut s = String::from(WEAK_HEADER);
    s.push('\n');
    for a in annotations {
        let labels: Vec<&str> = a.labels.iter().map(|&c| vocab[c].as_str()).collect();
        let _ = writeln!(s, "{}\t{}", a.clip_id, labels.join(","));
    }
    s
}

pub fn parse_clip_list(text: &str, context: &str) -> Result<Vec<ClipEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (id, dur) = l
                .split_once('\t')
                .ok_or_else(|| line_err(context, i + 1, "expected clip_id<TAB>duration"))?;
            let duration_s = dur
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|d| *d > 0.0 && d.is_finite())
                .ok_or_else(|| line_err(context, i + 1, format!("bad duration {dur:?}")))?;
            Ok(ClipEntry {
                clip_id: id.to_string(),
                duration_s,
            })
        })
        .collect()
}

pub fn write_clip_list(clips: &[ClipEntry]) -> String {
    let mut s = String::new();
    for c in clips {
        let _ = writeln!(s, "{}\t{}", c.clip_id, c.duration_s);
    }
    s
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_strong_tsv(path: &Path, vocab: &[String]) -> Result<Vec<StrongAnnotation>> {
    parse_strong_tsv(&read_text(path)?, vocab, &path.display().to_string())
}

pub fn read_weak_tsv(path: &Path, vocab: &[String]) -> Result<Vec<WeakAnnotation>> {
    parse_weak_tsv(&read_text(path)?, vocab, &path.display().to_string())
}

pub fn read_clip_list(path: &Path) -> Result<Vec<ClipEntry>> {
    parse_clip_list(&read_text(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> Vec<String> {
        ["Dog", "Cat", "Speech"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    #[test]
    fn strong_single_line() {
        let a = parse_strong_tsv("a.wav\t0.5\t2.0\tDog\n", &vocab(), "t").unwrap();
        assert_eq!(
            a,
            vec![StrongAnnotation {
                clip_id: "a.wav".into(),
                events: vec![Event {
                    onset: 0.5,
                    offset: 2.0,
                    class: 0
                }]
            }]
        );
        assert!(parse_strong_tsv("", &vocab(), "t").unwrap().is_empty());
    }

    #[test]
    fn strong_header_and_grouping() {
        let text =
            "filename\tonset\toffset\tevent_label\na\t0\t1\tDog\nb\t1\t2\tCat\na\t3\t4\tSpeech\n";
        let a = parse_strong_tsv(text, &vocab(), "t").unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].clip_id, "a");
        assert_eq!(a[0].events.len(), 2);
        assert_eq!(a[0].events[1].class, 2);
    }

    #[test]
    fn strong_errors() {
        let err = parse_strong_tsv("a.wav\t2.0\t1.0\tDog", &vocab(), "t").unwrap_err();
        assert!(
            err.to_string().contains("offset before onset, line 1"),
            "{err}"
        );
        let err = parse_strong_tsv("a.wav\t0\t1\tHorse", &vocab(), "t").unwrap_err();
        assert!(err.to_string().contains("Dog, Cat, Speech"), "{err}");
    }

    #[test]
    fn weak_parse() {
        let w = parse_weak_tsv("a.wav\tDog,Cat\n", &vocab(), "t").unwrap();
        assert_eq!(w[0].labels, BTreeSet::from([0, 1]));
        let w = parse_weak_tsv("a.wav\tDog,Dog\n", &vocab(), "t").unwrap();
        assert_eq!(w[0].labels, BTreeSet::from([0]));
        let err = parse_weak_tsv("a.wav\t", &vocab(), "t").unwrap_err();
        assert!(err.to_string().contains("no labels, line 1"), "{err}");
    }

    fn arb_strong() -> impl Strategy<Value = Vec<StrongAnnotation>> {
        prop::collection::vec(
            prop::collection::vec((0.0f64..100.0, 1e-6f64..50.0, 0usize..3), 1..4),
            0..4,
        )
        .prop_map(|clips| {
            clips
                .into_iter()
                .enumerate()
                .map(|(i, evs)| StrongAnnotation {
                    clip_id: format!("clip{i}.wav"),
                    events: evs
                        .into_iter()
                        .map(|(on, len, class)| Event {
                            onset: on,
                            offset: on + len,
                            class,
                        })
                        .filter(|e| e.offset > e.onset)
                        .collect(),
                })
                .filter(|a| !a.events.is_empty())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn strong_roundtrip_is_value_exact(anns in arb_strong()) {
            let text = write_strong_tsv(&anns, &vocab());
            prop_assert_eq!(parse_strong_tsv(&text, &vocab(), "t").unwrap(), anns);
        }

        #[test]
        fn weak_roundtrip(sets in prop::collection::vec(prop::collection::btree_set(0usize..3, 1..3), 0..5)) {
            let anns: Vec<WeakAnnotation> = sets
                .into_iter()
                .enumerate()
                .map(|(i, labels)| WeakAnnotation { clip_id: format!("c{i}"), labels })
                .collect();
            let text = write_weak_tsv(&anns, &vocab());
            prop_assert_eq!(parse_weak_tsv(&text, &vocab(), "t").unwrap(), anns);
        }
    }
}
