use super::Event;
use crate::error::{config_err, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MEDIAN_WINDOW: usize = 7;

/// `1` iff `p > tau`; a probability of exactly `tau` is inactive.
pub fn threshold<T: Copy + Into<f64>>(probs: &[T], tau: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p.into() > tau)).collect()
}

/// Sliding binary median over an odd `window`. Near the edges the window is
/// truncated to the available frames and a tie resolves to 0.
pub fn median_filter(column: &[u8], window: usize) -> Result<Vec<u8>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(config_err!(
            "median window must be odd and positive, got {window}"
        ));
    }
    let half = window / 2;
    let n = column.len();
    let mut prefix = vec![0usize; n + 1];
    for (i, &v) in column.iter().enumerate() {
        prefix[i + 1] = prefix[i] + usize::from(v != 0);
    }
    Ok((0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(n);
            let ones = prefix[hi] - prefix[lo];
            u8::from(2 * ones > hi - lo)
        })
        .collect())
}

/// Binary decisions on the model's output grid, row-major `[n_frames, n_classes]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameDecisions {
    pub data: Vec<u8>,
    pub n_frames: usize,
    pub n_classes: usize,
    pub frame_duration_s: f64,
}

impl FrameDecisions {
    pub fn new(
        data: Vec<u8>,
        n_frames: usize,
        n_classes: usize,
        frame_duration_s: f64,
    ) -> Result<Self> {
        if data.len() != n_frames * n_classes {
            return Err(config_err!(
                "decision matrix has {} entries, expected {n_frames}x{n_classes}",
                data.len()
            ));
        }
        if !(frame_duration_s > 0.0) {
            return Err(config_err!("frame duration must be positive"));
        }
        Ok(Self {
            data,
            n_frames,
            n_classes,
            frame_duration_s,
        })
    }

    pub fn column(&self, class: usize) -> Vec<u8> {
        (0..self.n_frames)
            .map(|t| self.data[t * self.n_classes + class])
            .collect()
    }

    pub fn set_column(&mut self, class: usize, column: &[u8]) {
        for (t, &v) in column.iter().enumerate() {
            self.data[t * self.n_classes + class] = v;
        }
    }

    /// Threshold then median-filter every class column.
    pub fn from_probs<T: Copy + Into<f64>>(
        probs: &[T],
        n_frames: usize,
        n_classes: usize,
        frame_duration_s: f64,
        tau: f64,
        window: usize,
    ) -> Result<Self> {
        let mut d = Self::new(threshold(probs, tau), n_frames, n_classes, frame_duration_s)?;
        for c in 0..n_classes {
            let smoothed = median_filter(&d.column(c), window)?;
            d.set_column(c, &smoothed);
        }
        Ok(d)
    }
}

/// Maximal runs of active frames per class, ordered by class then onset.
pub fn decode_events(decisions: &FrameDecisions) -> Vec<Event> {
    let d = decisions.frame_duration_s;
    let mut events = Vec::new();
    for class in 0..decisions.n_classes {
        let mut start = None;
        for t in 0..=decisions.n_frames {
            let on = t < decisions.n_frames && decisions.data[t * decisions.n_classes + class] != 0;
            match (on, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    events.push(Event {
                        onset: s as f64 * d,
                        offset: t as f64 * d,
                        class,
                    });
                    start = None;
                }
                _ => {}
            }
        }
    }
    events
}

/// Inverse of [`decode_events`]: frame `t` is active for an event when the frame
/// centre lies inside `[onset, offset)`.
pub fn rasterize(
    events: &[Event],
    n_frames: usize,
    n_classes: usize,
    frame_duration_s: f64,
) -> Result<FrameDecisions> {
    let mut data = vec![0u8; n_frames * n_classes];
    for e in events {
        if e.class >= n_classes {
            return Err(config_err!("event class {} out of range", e.class));
        }
        for t in 0..n_frames {
            let centre = (t as f64 + 0.5) * frame_duration_s;
            if e.onset <= centre && centre < e.offset {
                data[t * n_classes + e.class] = 1;
            }
        }
    }
    FrameDecisions::new(data, n_frames, n_classes, frame_duration_s)
}
