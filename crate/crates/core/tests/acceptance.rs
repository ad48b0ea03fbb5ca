//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sedfusion::cli::{cmd_generate, cmd_predict, cmd_train, RunConfig, STUDENT_CHECKPOINT};
use sedfusion::dataio::{
    decode_feature_file, encode_feature_file, load_split, parse_clip_list, parse_strong_tsv,
    parse_weak_tsv, synthesize_dataset, write_clip_list, write_strong_tsv, write_weak_tsv,
    ClipEntry, Dataset, Partition, StrongAnnotation, WeakAnnotation,
};
use sedfusion::error::Result;
use sedfusion::layers::Mode;
use sedfusion::meanteacher::{evaluate_model, predict_records, LrSchedule, TeacherState};
use sedfusion::metrics::{
    clip_micro_f1, evaluate_run, event_macro_f1, median_filter, segment_micro_f1, tags_of,
    ClipPrediction, Collars, Event, EventMap, MetricConfig, TagMap, DEFAULT_MEDIAN_WINDOW,
};
use sedfusion::model::{gradcheck_suite, linear_pool, Crnn, CrnnConfig, GRADCHECK_TOLERANCE};
use sedfusion::tensor::{FeatureTensor, Tensor};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Result<Verdict>;

fn main() {
    let criteria: [(&str, Check); 10] = [
        ("gradient integrity", gradient_integrity),
        ("linear pooling", linear_pooling),
        ("EMA law", ema_law),
        ("learning-rate schedule", schedule),
        ("shape law", shape_law),
        ("metric oracle equivalence", metric_oracles),
        ("postprocessing", postprocessing),
        ("end-to-end learning", end_to_end),
        ("fusion direction", fusion_direction),
        ("determinism and formats", determinism_and_formats),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| f == &n.to_string()) {
            continue;
        }
        let start = Instant::now();
        let v = check().unwrap_or_else(|e| verdict(false, format!("error: {e}")));
        failed += usize::from(!v.pass);
        println!(
            "criterion {n:2}: {} {name}: {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

fn gradient_integrity() -> Result<Verdict> {
    let start = Instant::now();
    let reports = gradcheck_suite(0, false)?;
    let elapsed = start.elapsed();
    let worst = reports
        .iter()
        .map(|(_, r)| r.max_relative_error)
        .fold(0.0, f64::max);
    let names: BTreeSet<&str> = reports.iter().map(|(n, _)| n.as_str()).collect();
    let sabotaged = gradcheck_suite(0, true)?;
    let caught = sabotaged
        .iter()
        .all(|(_, r)| r.max_relative_error >= GRADCHECK_TOLERANCE);
    let pass = worst < GRADCHECK_TOLERANCE
        && elapsed < Duration::from_secs(120)
        && caught
        && names.contains("crnn.eval");
    Ok(verdict(
        pass,
        format!(
            "{} checks, max rel err {worst:.2e} < {GRADCHECK_TOLERANCE:.0e} in {:.1}s; broken backward caught: {caught}",
            reports.len(),
            elapsed.as_secs_f64()
        ),
    ))
}

fn linear_pooling() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = Vec::new();
    for case in 0..500 {
        let len = rng.random_range(1..40);
        let c = rng.random_range(1..5);
        let frames: Vec<f64> = (0..len * c).map(|_| rng.random_range(1e-6..1.0)).collect();
        let pooled = linear_pool(&frames, c, len);
        let k = rng.random_range(0.01..1.0);
        let scaled: Vec<f64> = frames.iter().map(|p| k * p).collect();
        let pooled_scaled = linear_pool(&scaled, c, len);
        let value: f64 = rng.random_range(0.01..1.0);
        let constant = linear_pool(&vec![value; len * c], c, len);
        for j in 0..c {
            let col: Vec<f64> = frames.iter().skip(j).step_by(c).copied().collect();
            let (lo, hi) = col.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &p| {
                (lo.min(p), hi.max(p))
            });
            if pooled[j] < lo - 1e-12 || pooled[j] > hi + 1e-12 {
                violations.push(format!("case {case}: sandwich"));
            }
            if (pooled_scaled[j] - k * pooled[j]).abs() > 1e-12 {
                violations.push(format!("case {case}: scale"));
            }
            if (constant[j] - value).abs() > 1e-12 {
                violations.push(format!("case {case}: constant"));
            }
        }
    }
    let hand = linear_pool(&[0.8f64, 0.2], 1, 2)[0];
    let hand32 = linear_pool(&[0.8f32, 0.2], 1, 2)[0];
    let pass = violations.is_empty()
        && (hand - 0.68).abs() <= 1e-6
        && (f64::from(hand32) - 0.68).abs() <= 1e-6;
    Ok(verdict(
        pass,
        format!(
            "500 random cases, {} violations; [0.8,0.2] -> {hand:.6}",
            violations.len()
        ),
    ))
}

fn ema_law() -> Result<Verdict> {
    let config = CrnnConfig {
        conv_channels: vec![2; 7],
        gru_hidden: 3,
        n_classes: 2,
        ..CrnnConfig::default()
    };
    let mut student = Crnn::new(config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let mut zero = student.clone();
    for (_, t) in zero.state_mut() {
        t.fill(0.0);
    }
    for (_, t) in student.state_mut() {
        t.fill(1.0);
    }
    let mut teacher = TeacherState::new(&zero, 0.999)?;
    let mut done = 0;
    let mut details = Vec::new();
    let mut pass = true;
    for k in [1u32, 10, 1000] {
        while done < k {
            teacher.update(&student)?;
            done += 1;
        }
        let expected = (1.0 - 0.999f64.powi(k as i32)) as f32;
        let values: BTreeSet<u32> = teacher
            .model
            .state()
            .iter()
            .flat_map(|(_, t)| t.data().iter().map(|v| v.to_bits()))
            .collect();
        let exact = values.len() == 1 && values.contains(&expected.to_bits());
        pass &= exact;
        details.push(format!(
            "k={k}: {expected:.9} {}",
            if exact { "exact" } else { "MISMATCH" }
        ));
    }
    Ok(verdict(pass, details.join(", ")))
}

fn schedule() -> Result<Verdict> {
    let s = LrSchedule::default();
    let at_peak = s.lr_at(12500);
    let ratio = s.lr_at(12501) / at_peak;
    let mut monotone = true;
    let mut prev = s.lr_at(0);
    for step in 1..=25000u64 {
        let lr = s.lr_at(step);
        if (step <= 12500 && lr < prev) || (step > 12500 && lr > prev) {
            monotone = false;
        }
        prev = lr;
    }
    let pass = at_peak == 0.001 && (ratio - 0.99995).abs() <= 1e-9 && monotone;
    Ok(verdict(
        pass,
        format!("lr(12500) = {at_peak}, lr(12501)/lr(12500) = {ratio:.10}, monotone on [0,25000]: {monotone}"),
    ))
}

fn shape_law() -> Result<Verdict> {
    let start = Instant::now();
    let mut model = Crnn::<f32>::new(
        CrnnConfig::spectral_only(),
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    let input = Tensor::from_fn(&[1, 1, 604, 128], |i| ((i % 97) as f32 / 97.0) - 0.5);
    let encoded = model.cnn_encode(&input, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(1))?;
    let fused = CrnnConfig::with_modalities(true, true, true);
    let pass_shape = encoded.shape() == [1, 151, 128];
    let pass_fused = fused.fused_dim() == 148 && (fused.emb_audio, fused.emb_visual) == (16, 4);
    let elapsed = start.elapsed();
    Ok(verdict(
        pass_shape && pass_fused && elapsed < Duration::from_secs(10),
        format!(
            "[1,1,604,128] -> {:?}, fused dim {} = 128+{}+{}, {:.2}s",
            encoded.shape(),
            fused.fused_dim(),
            fused.emb_audio,
            fused.emb_visual,
            elapsed.as_secs_f64()
        ),
    ))
}

fn random_events(rng: &mut ChaCha8Rng, n: usize, duration: f64, n_classes: usize) -> Vec<Event> {
    (0..n)
        .map(|_| {
            let onset = (rng.random_range(0.0..duration) * 20.0).floor() / 20.0;
            let len = (rng.random_range(0.05..duration - onset + 0.05) * 20.0).ceil() / 20.0;
            Event {
                onset,
                offset: (onset + len).min(duration),
                class: rng.random_range(0..n_classes),
            }
        })
        .filter(|e| e.offset > e.onset)
        .collect()
}

fn jitter(rng: &mut ChaCha8Rng, events: &[Event], duration: f64) -> Vec<Event> {
    let kept: Vec<&Event> = events.iter().filter(|_| rng.random_bool(0.8)).collect();
    kept.into_iter()
        .map(|e| {
            let onset = (e.onset + rng.random_range(-0.3..0.3)).clamp(0.0, duration);
            let offset = (e.offset + rng.random_range(-0.5..0.5)).clamp(0.0, duration);
            Event {
                onset: onset.min(offset),
                offset: offset.max(onset),
                class: e.class,
            }
        })
        .filter(|e| e.offset > e.onset)
        .collect()
}

fn brute_segments(
    pred: &[Event],
    refs: &[Event],
    duration: f64,
    n_classes: usize,
    counts: &mut [[usize; 3]],
) {
    let n_seg = ((duration / 1.0).ceil() as usize).max(1);
    let active = |events: &[Event], k: usize, c: usize| {
        let (start, end) = (k as f64, ((k + 1) as f64).min(duration));
        events
            .iter()
            .any(|e| e.class == c && e.offset.min(end) - e.onset.max(start) > 0.0)
    };
    for k in 0..n_seg {
        for (c, slot) in counts.iter_mut().enumerate().take(n_classes) {
            match (active(pred, k, c), active(refs, k, c)) {
                (true, true) => slot[0] += 1,
                (true, false) => slot[1] += 1,
                (false, true) => slot[2] += 1,
                _ => {}
            }
        }
    }
}

fn collar_ok(r: &Event, p: &Event) -> bool {
    let tol = 0.2f64.max(0.2 * (r.offset - r.onset));
    r.class == p.class && (p.onset - r.onset).abs() <= 0.2 && (p.offset - r.offset).abs() <= tol
}

/// Largest one-to-one matching, by exhaustive search.
fn brute_matching(refs: &[Event], preds: &[Event], used: &mut Vec<bool>) -> usize {
    let Some((first, rest)) = refs.split_first() else {
        return 0;
    };
    let mut best = brute_matching(rest, preds, used);
    for j in 0..preds.len() {
        if !used[j] && collar_ok(first, &preds[j]) {
            used[j] = true;
            best = best.max(1 + brute_matching(rest, preds, used));
            used[j] = false;
        }
    }
    best
}

fn metric_oracles() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let collars = Collars::default();
    let instances = 1500;
    let mut mismatches = 0;
    for _ in 0..instances {
        let n_classes = rng.random_range(1..=4);
        let n_clips = rng.random_range(1..=3);
        let mut pred = EventMap::new();
        let mut refs = EventMap::new();
        let mut durations = BTreeMap::new();
        let mut seg_counts = vec![[0usize; 3]; n_classes];
        let mut ev_counts = vec![[0usize; 3]; n_classes];
        for c in 0..n_clips {
            let id = format!("clip{c}");
            let duration = (rng.random_range(0.5..20.0) * 10.0f64).round() / 10.0;
            let n_ref = rng.random_range(0..=5);
            let r = random_events(&mut rng, n_ref, duration, n_classes);
            let mut p = jitter(&mut rng, &r, duration);
            let extra = rng.random_range(0..=5usize.saturating_sub(p.len()));
            p.extend(random_events(&mut rng, extra, duration, n_classes));
            brute_segments(&p, &r, duration, n_classes, &mut seg_counts);
            for (class, slot) in ev_counts.iter_mut().enumerate() {
                let rc: Vec<Event> = r.iter().filter(|e| e.class == class).copied().collect();
                let pc: Vec<Event> = p.iter().filter(|e| e.class == class).copied().collect();
                let m = brute_matching(&rc, &pc, &mut vec![false; pc.len()]);
                slot[0] += m;
                slot[1] += pc.len() - m;
                slot[2] += rc.len() - m;
            }
            durations.insert(id.clone(), duration);
            pred.insert(id.clone(), p);
            refs.insert(id, r);
        }
        let seg = segment_micro_f1(&pred, &refs, &durations, n_classes, 1.0)?;
        let ev = event_macro_f1(&pred, &refs, n_classes, &collars)?;
        let got = |r: &sedfusion::metrics::F1Report| -> Vec<[usize; 3]> {
            r.per_class.iter().map(|c| [c.tp, c.fp, c.fn_]).collect()
        };
        if got(&seg) != seg_counts || got(&ev) != ev_counts {
            mismatches += 1;
        }
    }
    let pred: TagMap = BTreeMap::from([
        ("a".into(), BTreeSet::from([0])),
        ("b".into(), BTreeSet::from([0, 1])),
    ]);
    let reference: TagMap = BTreeMap::from([
        ("a".into(), BTreeSet::from([0])),
        ("b".into(), BTreeSet::from([1])),
    ]);
    let clip = clip_micro_f1(&pred, &reference, 2)?;
    let hand = 2.0 * 2.0 / (2.0 * 2.0 + 1.0 + 0.0);
    let pass = mismatches == 0 && clip.f1 == hand && (clip.f1 - 0.8).abs() < 1e-12;
    Ok(verdict(
        pass,
        format!(
            "{instances} random instances, {mismatches} count mismatches vs brute force; worked clip example F1 {:.3}",
            clip.f1
        ),
    ))
}

fn small_synth_config(profile: RunConfig) -> RunConfig {
    let mut config = profile;
    for (k, v) in [
        ("synth.n_weak", "24"),
        ("synth.n_unlabeled", "12"),
        ("synth.n_val", "8"),
        ("synth.n_test", "8"),
        ("synth.pre_visual_dim", "16"),
        ("model.conv_channels", "4,4,8,8,8,8,8"),
        ("model.gru_hidden", "8"),
        ("train.epochs", "1"),
        ("train.batches_per_epoch", "3"),
        ("train.batch_weak", "4"),
        ("train.batch_unlabeled", "4"),
    ] {
        config.set(k, v).expect("known key");
    }
    config
}

fn zero_weight_silence() -> Result<bool> {
    let dir = tempfile::tempdir().map_err(|e| sedfusion::error::Error::io("tempdir", e))?;
    let config = small_synth_config(RunConfig::desk());
    cmd_generate(&config, dir.path(), true)?;
    let data = load_split(dir.path())?;
    let model_config = config.model.resolve(&data.manifest)?;
    let mut model = Crnn::new(model_config, &mut ChaCha8Rng::seed_from_u64(0))?;
    for (_, p) in model.params_mut() {
        p.value.fill(0.0);
    }
    let test = data.records(Partition::Test);
    let preds = predict_records(&mut model, &test, 8)?;
    let all_half = preds
        .iter()
        .all(|p| p.frame_probs.iter().chain(&p.clip_probs).all(|&v| v == 0.5));
    let report = evaluate_run(
        &preds,
        &data.test_strong,
        data.manifest.n_classes(),
        &MetricConfig::default(),
    )?;
    Ok(all_half
        && report.clip.tp + report.clip.fp == 0
        && report.segment.tp + report.segment.fp == 0
        && report.event.tp + report.event.fp == 0)
}

fn postprocessing() -> Result<Verdict> {
    let w = DEFAULT_MEDIAN_WINDOW;
    let n = 40;
    let mut isolated_ok = true;
    let mut runs_ok = true;
    for pos in 0..n {
        let mut col = vec![0u8; n];
        col[pos] = 1;
        isolated_ok &= median_filter(&col, w)?.iter().all(|&v| v == 0);
    }
    for len in 4..=12 {
        for start in w..n - w - len {
            let mut col = vec![0u8; n];
            col[start..start + len].fill(1);
            runs_ok &= median_filter(&col, w)? == col;
        }
    }
    let silence = zero_weight_silence()?;
    Ok(verdict(
        isolated_ok && runs_ok && silence,
        format!("window {w}: isolated positives removed {isolated_ok}, interior runs 4..12 preserved {runs_ok}; zero-weight model silent {silence}"),
    ))
}

fn synth_dataset(config: &RunConfig, dir: &Path) -> Result<Dataset> {
    synthesize_dataset(&config.synth_spec(), dir)?;
    load_split(dir)
}

/// Predictions active on exactly the classes each clip lacks, for every frame.
fn inverted_oracle(
    records: &[&sedfusion::dataio::ClipRecord],
    reference: &EventMap,
    n_classes: usize,
) -> Vec<ClipPrediction> {
    records
        .iter()
        .map(|r| {
            let tags = reference
                .get(&r.clip_id)
                .map(|e| tags_of(e))
                .unwrap_or_default();
            let row: Vec<f32> = (0..n_classes)
                .map(|c| if tags.contains(&c) { 0.0 } else { 1.0 })
                .collect();
            let n_frames = r.output_frames();
            ClipPrediction {
                clip_id: r.clip_id.clone(),
                duration_s: r.duration_s,
                frame_probs: row
                    .iter()
                    .copied()
                    .cycle()
                    .take(n_frames * n_classes)
                    .collect(),
                n_frames,
                clip_probs: row,
            }
        })
        .collect()
}

fn end_to_end() -> Result<Verdict> {
    let dir = tempfile::tempdir().map_err(|e| sedfusion::error::Error::io("tempdir", e))?;
    let config = RunConfig::desk();
    let data = synth_dataset(&config, dir.path())?;
    let start = Instant::now();
    let outcome = sedfusion::cli::run_training(&config, &data)?;
    let elapsed = start.elapsed();
    let last = outcome.epochs.last().map_or(f64::NAN, |e| e.val_clip_f1);
    let val = data.records(Partition::Val);
    let inverted = inverted_oracle(&val, &data.val_strong, data.manifest.n_classes());
    let inv = evaluate_run(
        &inverted,
        &data.val_strong,
        data.manifest.n_classes(),
        &config.metric,
    )?;
    let inv_zero = inv.clip.f1 == 0.0 && inv.segment.f1 == 0.0 && inv.event.f1 == 0.0;
    let epochs = config.train.epochs;
    let pass = last >= 0.90 && epochs <= 20 && elapsed <= Duration::from_secs(15 * 60) && inv_zero;
    Ok(verdict(
        pass,
        format!(
            "spectral-only, {epochs} epochs in {:.0}s: final val clip F1 {last:.4} (>= 0.90); inverted oracle F1 {:.2}/{:.2}/{:.2}",
            elapsed.as_secs_f64(),
            inv.clip.f1,
            inv.segment.f1,
            inv.event.f1
        ),
    ))
}

fn fusion_direction() -> Result<Verdict> {
    let dir = tempfile::tempdir().map_err(|e| sedfusion::error::Error::io("tempdir", e))?;
    let base = RunConfig::fusion();
    let data = synth_dataset(&base, dir.path())?;
    let test = data.records(Partition::Test);
    let mut diffs = [0.0f64; 3];
    let mut rows = Vec::new();
    for seed in 0..3u64 {
        let mut scores = Vec::new();
        for fused in [false, true] {
            let mut config = RunConfig {
                seed,
                ..base.clone()
            };
            config.model.set_modalities(true, fused, fused);
            let mut outcome = sedfusion::cli::run_training(&config, &data)?;
            let r = evaluate_model(
                &mut outcome.student,
                &test,
                &data.test_strong,
                &config.metric,
                config.train.eval_batch,
            )?;
            scores.push([r.clip.f1, r.segment.f1, r.event.f1]);
        }
        for (d, (f, s)) in diffs.iter_mut().zip(scores[1].iter().zip(&scores[0])) {
            *d += (f - s) / 3.0;
        }
        rows.push(format!(
            "seed {seed}: spectral {:.3}/{:.3} fused {:.3}/{:.3}",
            scores[0][0], scores[0][1], scores[1][0], scores[1][1]
        ));
    }
    Ok(verdict(
        diffs[0] >= 0.0 && diffs[1] >= 0.0,
        format!(
            "mean fused - spectral: clip {:+.4}, segment {:+.4}, event {:+.4} ({})",
            diffs[0],
            diffs[1],
            diffs[2],
            rows.join("; ")
        ),
    ))
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let bytes = std::fs::read(&path).expect("readable file");
                out.push((
                    path.strip_prefix(dir)
                        .expect("prefix")
                        .display()
                        .to_string(),
                    bytes,
                ));
            }
        }
    }
    out.sort();
    out
}

fn determinism_and_formats() -> Result<Verdict> {
    let tmp = tempfile::tempdir().map_err(|e| sedfusion::error::Error::io("tempdir", e))?;
    let root = tmp.path();
    let config = small_synth_config(RunConfig::desk());
    let mut identical = true;
    for run in ["a", "b"] {
        let d = root.join(run);
        cmd_generate(&config, &d.join("data"), false)?;
        cmd_train(&config, &d.join("data"), &d.join("train"), false)?;
        cmd_predict(
            &config,
            &d.join("train").join(STUDENT_CHECKPOINT),
            &d.join("data"),
            "test",
            &d.join("pred"),
            false,
        )?;
    }
    for part in ["data", "train", "pred"] {
        identical &= tree(&root.join("a").join(part)) == tree(&root.join("b").join(part));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut container_ok = true;
    for _ in 0..50 {
        let tensors: Vec<(String, FeatureTensor)> = (0..rng.random_range(1..4))
            .map(|i| {
                let shape = [rng.random_range(0..7), rng.random_range(1..9)];
                let t = FeatureTensor::from_fn(&shape, |_| {
                    f32::from_bits(rng.next_u32() & 0xff7f_ffff)
                });
                (format!("t{i}"), t)
            })
            .collect();
        let bytes = encode_feature_file(&tensors)?;
        let back = decode_feature_file(&bytes, "roundtrip")?;
        container_ok &= encode_feature_file(&back)? == bytes
            && back.iter().zip(&tensors).all(|(a, b)| {
                a.0 == b.0
                    && a.1.shape() == b.1.shape()
                    && a.1
                        .data()
                        .iter()
                        .zip(b.1.data())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            });
    }

    let vocab: Vec<String> = config.synth.vocabulary.clone();
    let mut tsv_ok = true;
    for i in 0..50 {
        let strong: Vec<StrongAnnotation> = (0..rng.random_range(1..5))
            .map(|c| StrongAnnotation {
                clip_id: format!("c{i}_{c}"),
                events: (0..rng.random_range(1..4))
                    .map(|_| {
                        let onset = rng.random_range(0.0..9.0);
                        Event {
                            onset,
                            offset: onset + rng.random_range(0.001..1.0),
                            class: rng.random_range(0..vocab.len()),
                        }
                    })
                    .collect(),
            })
            .collect();
        tsv_ok &= parse_strong_tsv(&write_strong_tsv(&strong, &vocab), &vocab, "s")? == strong;
        let weak: Vec<WeakAnnotation> = strong
            .iter()
            .map(|s| WeakAnnotation {
                clip_id: s.clip_id.clone(),
                labels: tags_of(&s.events),
            })
            .collect();
        tsv_ok &= parse_weak_tsv(&write_weak_tsv(&weak, &vocab), &vocab, "w")? == weak;
        let clips: Vec<ClipEntry> = strong
            .iter()
            .map(|s| ClipEntry {
                clip_id: s.clip_id.clone(),
                duration_s: rng.random_range(0.1..20.0),
            })
            .collect();
        tsv_ok &= parse_clip_list(&write_clip_list(&clips), "l")? == clips;
    }
    Ok(verdict(
        identical && container_ok && tsv_ok,
        format!("generate/train/predict reruns byte-identical {identical}; container round trip exact {container_ok}; TSV round trips exact {tsv_ok}"),
    ))
}
