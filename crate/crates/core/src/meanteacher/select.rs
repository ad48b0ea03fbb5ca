use std::fmt::Write as _;

use crate::error::{config_err, Result};
use crate::metrics::EvalReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectMetric {
    Clip,
    Segment,
    Event,
}

impl SelectMetric {
    pub fn name(self) -> &'static str {
        match self {
            SelectMetric::Clip => "clip",
            SelectMetric::Segment => "segment",
            SelectMetric::Event => "event",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "clip" => Ok(SelectMetric::Clip),
            "segment" => Ok(SelectMetric::Segment),
            "event" => Ok(SelectMetric::Event),
            other => Err(config_err!(
                "unknown selection metric {other:?} (expected clip, segment or event)"
            )),
        }
    }

    pub fn of(self, report: &EvalReport) -> f64 {
        match self {
            SelectMetric::Clip => report.clip.f1,
            SelectMetric::Segment => report.segment.f1,
            SelectMetric::Event => report.event.f1,
        }
    }
}

/// Validation and test scores of one independently initialised run.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub val: EvalReport,
    pub test: EvalReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub metric: SelectMetric,
    pub runs: Vec<SeedRun>,
    /// Indices into `runs`, best first.
    pub selected: Vec<usize>,
    /// Mean test F1 over the selected runs: clip, segment, event.
    pub mean_test: [f64; 3],
}

/// Indices of the `k` highest scores, best first; ties keep the earlier index.
pub fn top_k(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(config_err!("cannot select {k} of {} runs", scores.len()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// Keeps the `k` runs with the best validation score and averages their test scores.
pub fn multi_seed_select(runs: Vec<SeedRun>, k: usize, metric: SelectMetric) -> Result<Selection> {
    let scores: Vec<f64> = runs.iter().map(|r| metric.of(&r.val)).collect();
    let selected = top_k(&scores, k)?;
    let mut mean_test = [0.0; 3];
    for &i in &selected {
        let t = &runs[i].test;
        for (m, v) in mean_test
            .iter_mut()
            .zip([t.clip.f1, t.segment.f1, t.event.f1])
        {
            *m += v / k as f64;
        }
    }
    Ok(Selection {
        metric,
        runs,
        selected,
        mean_test,
    })
}

impl Selection {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "seed\tval_{}_f1\ttest_clip_f1\ttest_segment_f1\ttest_event_f1\tselected\n",
            self.metric.name()
        );
        for (i, r) in self.runs.iter().enumerate() {
            let _ = writeln!(
                s,
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
                r.seed,
                self.metric.of(&r.val),
                r.test.clip.f1,
                r.test.segment.f1,
                r.test.event.f1,
                self.selected.contains(&i)
            );
        }
        let [c, g, e] = self.mean_test;
        let _ = writeln!(
            s,
            "mean_selected\t\t{c:.6}\t{g:.6}\t{e:.6}\t{}",
            self.selected.len()
        );
        s
    }
}
