//! Command-line verbs: generate, train, predict, evaluate, gradcheck, experiment.

mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{
    ExperimentSettings, ModelSettings, RunConfig, CONFIG_ECHO_FILE, DESK_CHANNELS,
    FUSION_PRETRAINED_SNR, FUSION_SPECTRAL_SNR,
};

use crate::dataio::{
    load_split, read_clip_list, read_strong_tsv, read_text, read_weak_tsv, synthesize_dataset,
    write_clip_list, write_strong_tsv, write_text, write_weak_tsv, ClipEntry, Dataset,
    DatasetSummary, Partition, StrongAnnotation, WeakAnnotation,
};
use crate::error::{config_err, Error, Result};
use crate::kv::parse_kv;
use crate::meanteacher::{
    evaluate_model, multi_seed_select, predict_records, train, SeedRun, Selection, TrainOutcome,
};
use crate::metrics::{postprocess_clip, score, EvalReport, EventMap, TagMap};
use crate::model::{gradcheck_suite, load_checkpoint, save_checkpoint, Crnn, GRADCHECK_TOLERANCE};

pub const STUDENT_CHECKPOINT: &str = "student.ftb";
pub const TEACHER_CHECKPOINT: &str = "teacher.ftb";
pub const TRAIN_LOG: &str = "train_log.tsv";
pub const PRED_STRONG: &str = "predictions_strong.tsv";
pub const PRED_WEAK: &str = "predictions_weak.tsv";
pub const PRED_CLIPS: &str = "clips.lst";
pub const REPORT_FILE: &str = "report.tsv";
pub const PAIRS_FILE: &str = "matching_pairs.tsv";
pub const TABLE_FILE: &str = "table.tsv";
pub const TABLE_ROW_HEADER: &str = "clip_f1\tsegment_f1\tevent_f1";

/// The seven feature combinations compared by `experiment`: spectral, pretrained audio, pretrained visual.
pub const COMBINATIONS: [(bool, bool, bool); 7] = [
    (true, false, false),
    (true, false, true),
    (true, true, false),
    (true, true, true),
    (false, false, true),
    (false, true, false),
    (false, true, true),
];

#[derive(Parser, Debug)]
#[command(
    name = "sedfusion",
    version,
    about = "Sound event detection with feature fusion and mean-teacher training"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// key=value settings file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the `seed` setting
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Write into a non-empty output directory
    #[arg(long, global = true)]
    pub force: bool,
    /// Extra key=value setting, applied after --config (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset
    Generate,
    /// Mean-teacher training on a dataset
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Not supported; runs always start from a fresh initialization
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Tags and events for one partition from a checkpoint
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Score predictions against strong references
    Evaluate {
        /// Directory written by `predict`
        #[arg(long)]
        predictions: PathBuf,
        /// Reference strong-label TSV
        #[arg(long)]
        reference: PathBuf,
        /// Clip list defining the scored clips (defaults to the one next to the predictions)
        #[arg(long)]
        clips: Option<PathBuf>,
    },
    /// Finite-difference check of every layer and the micro model
    Gradcheck {
        /// Scale analytic gradients so the check must fail
        #[arg(long, hide = true)]
        broken_backward: bool,
    },
    /// Multi-seed comparison of the seven feature combinations
    Experiment {
        /// Existing dataset; generated into the output directory when absent
        #[arg(long)]
        data: Option<PathBuf>,
        /// One seed per combination
        #[arg(long)]
        smoke: bool,
    },
}

/// Resolves the run configuration: profile defaults, then the config file, then
/// `--set` pairs, then `--seed`.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    if let Some(path) = &global.config {
        let context = path.display().to_string();
        pairs.extend(parse_kv(&read_text(path)?, &context)?);
    }
    for s in &global.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| config_err!("--set expects key=value, got {s:?}"))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = global.seed {
        pairs.push(("seed".into(), seed.to_string()));
    }
    RunConfig::from_pairs(&pairs)
}

/// Creates `dir`, refusing to write into a non-empty directory unless `force`.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(config_err!(
                "output directory {} is not empty (use --force)",
                dir.display()
            ));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn require_out(global: &GlobalArgs) -> Result<&Path> {
    global
        .out
        .as_deref()
        .ok_or_else(|| config_err!("--out is required for this command"))
}

fn echo_config(dir: &Path, config: &RunConfig) -> Result<()> {
    write_text(&dir.join(CONFIG_ECHO_FILE), &config.to_text())
}

pub fn cmd_generate(config: &RunConfig, out: &Path, force: bool) -> Result<DatasetSummary> {
    let spec = config.synth_spec();
    spec.validate()?;
    prepare_out_dir(out, force)?;
    let summary = synthesize_dataset(&spec, out)?;
    echo_config(out, config)?;
    Ok(summary)
}

pub fn run_training(config: &RunConfig, data: &Dataset) -> Result<TrainOutcome> {
    let model_config = config.model.resolve(&data.manifest)?;
    train(
        &model_config,
        &config.train,
        config.seed,
        data,
        &config.metric,
    )
}

pub fn cmd_train(
    config: &RunConfig,
    data_dir: &Path,
    out: &Path,
    force: bool,
) -> Result<TrainOutcome> {
    let data = load_split(data_dir)?;
    let outcome = run_training(config, &data)?;
    prepare_out_dir(out, force)?;
    save_checkpoint(&out.join(STUDENT_CHECKPOINT), &outcome.student)?;
    save_checkpoint(&out.join(TEACHER_CHECKPOINT), &outcome.teacher)?;
    write_text(&out.join(TRAIN_LOG), &outcome.log_text(&config.entries()))?;
    echo_config(out, config)?;
    Ok(outcome)
}

/// Checks that a checkpoint fits a dataset, naming every key that differs.
pub fn check_compatible(model: &Crnn<f32>, data: &Dataset) -> Result<()> {
    let have = model.config();
    let mut want = have.clone();
    want.n_classes = data.manifest.n_classes();
    if have.use_pre_audio {
        want.pre_audio_dim = data.manifest.pre_audio_dim;
    }
    if have.use_pre_visual {
        want.pre_visual_dim = data.manifest.pre_visual_dim;
    }
    let mut differing: Vec<String> = have.diff(&want).into_iter().map(String::from).collect();
    for m in have.modalities() {
        if !data.manifest.has(m) {
            differing.push(format!("use_{}", m.name()));
        }
    }
    if differing.is_empty() {
        Ok(())
    } else {
        Err(config_err!(
            "checkpoint does not match the dataset; differing keys: {}",
            differing.join(", ")
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionFiles {
    pub strong: Vec<StrongAnnotation>,
    pub weak: Vec<WeakAnnotation>,
    pub clips: Vec<ClipEntry>,
}

pub fn predict_split(
    model: &mut Crnn<f32>,
    data: &Dataset,
    split: Partition,
    config: &RunConfig,
) -> Result<PredictionFiles> {
    check_compatible(model, data)?;
    let records = data.records(split);
    let preds = predict_records(model, &records, config.train.eval_batch)?;
    let mut files = PredictionFiles {
        strong: Vec::new(),
        weak: Vec::new(),
        clips: Vec::new(),
    };
    for p in &preds {
        let (tags, events) = postprocess_clip(p, &config.metric)?;
        files.clips.push(ClipEntry {
            clip_id: p.clip_id.clone(),
            duration_s: p.duration_s,
        });
        if !events.is_empty() {
            files.strong.push(StrongAnnotation {
                clip_id: p.clip_id.clone(),
                events,
            });
        }
        if !tags.is_empty() {
            files.weak.push(WeakAnnotation {
                clip_id: p.clip_id.clone(),
                labels: tags,
            });
        }
    }
    Ok(files)
}

pub fn cmd_predict(
    config: &RunConfig,
    checkpoint: &Path,
    data_dir: &Path,
    split: &str,
    out: &Path,
    force: bool,
) -> Result<PredictionFiles> {
    let split = Partition::parse(split)?;
    let mut model = load_checkpoint(checkpoint)?;
    let data = load_split(data_dir)?;
    let files = predict_split(&mut model, &data, split, config)?;
    prepare_out_dir(out, force)?;
    let vocab = &data.manifest.vocabulary;
    write_text(
        &out.join(PRED_STRONG),
        &write_strong_tsv(&files.strong, vocab),
    )?;
    write_text(&out.join(PRED_WEAK), &write_weak_tsv(&files.weak, vocab))?;
    write_text(&out.join(PRED_CLIPS), &write_clip_list(&files.clips))?;
    echo_config(out, config)?;
    Ok(files)
}

/// Scores prediction TSVs. The vocabulary is the configured synthetic one.
pub fn cmd_evaluate(
    config: &RunConfig,
    predictions: &Path,
    reference: &Path,
    clips: Option<&Path>,
    out: Option<&Path>,
    force: bool,
) -> Result<EvalReport> {
    let vocab = &config.synth.vocabulary;
    let clip_path = clips.map_or_else(|| predictions.join(PRED_CLIPS), Path::to_path_buf);
    let durations: BTreeMap<String, f64> = read_clip_list(&clip_path)?
        .into_iter()
        .map(|c| (c.clip_id, c.duration_s))
        .collect();
    let mut tags: TagMap = durations
        .keys()
        .map(|k| (k.clone(), Default::default()))
        .collect();
    for w in read_weak_tsv(&predictions.join(PRED_WEAK), vocab)? {
        let slot = tags.get_mut(&w.clip_id).ok_or_else(|| {
            Error::Data(format!(
                "clip universe mismatch: predicted tags for unlisted clip {}",
                w.clip_id
            ))
        })?;
        slot.extend(w.labels);
    }
    let mut events: EventMap = durations.keys().map(|k| (k.clone(), Vec::new())).collect();
    for s in read_strong_tsv(&predictions.join(PRED_STRONG), vocab)? {
        let slot = events.get_mut(&s.clip_id).ok_or_else(|| {
            Error::Data(format!(
                "clip universe mismatch: predicted events for unlisted clip {}",
                s.clip_id
            ))
        })?;
        slot.extend(s.events);
    }
    let mut refs = EventMap::new();
    for a in read_strong_tsv(reference, vocab)? {
        refs.entry(a.clip_id).or_default().extend(a.events);
    }
    let report = score(
        &tags,
        &events,
        &refs,
        &durations,
        vocab.len(),
        &config.metric,
    )?;
    if let Some(out) = out {
        prepare_out_dir(out, force)?;
        write_text(&out.join(REPORT_FILE), &report.to_text(vocab))?;
        write_text(&out.join(PAIRS_FILE), &report.matching_pairs_text(vocab))?;
    }
    Ok(report)
}

/// Gradient-check report text and whether every check passed.
pub fn cmd_gradcheck(seed: u64, broken_backward: bool) -> Result<(String, bool)> {
    let reports = gradcheck_suite(seed, broken_backward)?;
    let mut text = String::from("check\tlayer\tmax_relative_error\n");
    let mut worst = 0.0f64;
    for (name, r) in &reports {
        for (layer, err) in r.per_layer() {
            let _ = writeln!(text, "{name}\t{layer}\t{err:.3e}");
        }
        worst = worst.max(r.max_relative_error);
    }
    let pass = worst < GRADCHECK_TOLERANCE;
    let _ = writeln!(
        text,
        "{}: max relative error {worst:.3e} (tolerance {GRADCHECK_TOLERANCE:.0e})",
        if pass { "PASS" } else { "FAIL" }
    );
    Ok((text, pass))
}

pub fn combination_name((s, a, v): (bool, bool, bool)) -> String {
    let parts: Vec<&str> = [(s, "spectral"), (a, "pre_audio"), (v, "pre_visual")]
        .into_iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| n)
        .collect();
    parts.join("+")
}

/// Trains `n_seeds` students for one feature combination and scores each on
/// validation and test.
pub fn seed_runs(config: &RunConfig, data: &Dataset, n_seeds: usize) -> Result<Vec<SeedRun>> {
    let val = data.records(Partition::Val);
    let test = data.records(Partition::Test);
    (0..n_seeds as u64)
        .map(|i| {
            let run_config = RunConfig {
                seed: config.seed + i,
                ..config.clone()
            };
            let mut outcome = run_training(&run_config, data)?;
            let eb = config.train.eval_batch;
            Ok(SeedRun {
                seed: run_config.seed,
                val: evaluate_model(
                    &mut outcome.student,
                    &val,
                    &data.val_strong,
                    &config.metric,
                    eb,
                )?,
                test: evaluate_model(
                    &mut outcome.student,
                    &test,
                    &data.test_strong,
                    &config.metric,
                    eb,
                )?,
            })
        })
        .collect()
}

pub fn experiment_table(rows: &[((bool, bool, bool), Selection)]) -> String {
    let mark = |b: bool| if b { "x" } else { "-" };
    let mut s = format!("spectral\tpre_audio\tpre_visual\t{TABLE_ROW_HEADER}\n");
    for ((sp, a, v), sel) in rows {
        let [c, g, e] = sel.mean_test;
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{:.2}%\t{:.2}%\t{:.2}%",
            mark(*sp),
            mark(*a),
            mark(*v),
            100.0 * c,
            100.0 * g,
            100.0 * e
        );
    }
    s
}

pub fn cmd_experiment(
    config: &RunConfig,
    data_dir: Option<&Path>,
    smoke: bool,
    out: &Path,
    force: bool,
) -> Result<String> {
    prepare_out_dir(out, force)?;
    let mut config = config.clone();
    if smoke {
        config.experiment.n_seeds = 1;
        config.experiment.k_best = 1;
    }
    let data_dir = match data_dir {
        Some(d) => d.to_path_buf(),
        None => {
            let d = out.join("data");
            prepare_out_dir(&d, force)?;
            synthesize_dataset(&config.synth_spec(), &d)?;
            d
        }
    };
    let data = load_split(&data_dir)?;
    echo_config(out, &config)?;
    let mut rows = Vec::with_capacity(COMBINATIONS.len());
    for combo in COMBINATIONS {
        let mut row_config = config.clone();
        row_config.model.set_modalities(combo.0, combo.1, combo.2);
        row_config.model.emb_audio = config.model.emb_audio;
        row_config.model.emb_visual = config.model.emb_visual;
        let name = combination_name(combo);
        log::info!("experiment row {name}");
        let runs = seed_runs(&row_config, &data, config.experiment.n_seeds)?;
        let selection = multi_seed_select(
            runs,
            config.experiment.k_best,
            config.experiment.select_metric,
        )?;
        write_text(
            &out.join(format!("selection_{name}.tsv")),
            &selection.to_text(),
        )?;
        rows.push((combo, selection));
    }
    let table = experiment_table(&rows);
    write_text(&out.join(TABLE_FILE), &table)?;
    Ok(table)
}

/// Runs one parsed command line; the returned text goes to stdout.
pub fn run(cli: Cli) -> Result<String> {
    let config = resolve_config(&cli.global)?;
    let g = &cli.global;
    match cli.command {
        Command::Generate => {
            let summary = cmd_generate(&config, require_out(g)?, g.force)?;
            Ok(format!("{summary}\n"))
        }
        Command::Train { data, resume } => {
            if resume.is_some() {
                return Err(config_err!(
                    "--resume is not supported: training always starts from a fresh initialization"
                ));
            }
            let out = require_out(g)?;
            let outcome = cmd_train(&config, &data, out, g.force)?;
            let last = outcome.epochs.last().map_or(String::new(), |e| e.line());
            Ok(format!(
                "trained {} steps; wrote {}\n{last}\n",
                outcome.steps,
                out.display()
            ))
        }
        Command::Predict {
            checkpoint,
            data,
            split,
        } => {
            let out = require_out(g)?;
            let files = cmd_predict(&config, &checkpoint, &data, &split, out, g.force)?;
            let n_events: usize = files.strong.iter().map(|s| s.events.len()).sum();
            Ok(format!(
                "{} clips, {} events; wrote {}\n",
                files.clips.len(),
                n_events,
                out.display()
            ))
        }
        Command::Evaluate {
            predictions,
            reference,
            clips,
        } => {
            let report = cmd_evaluate(
                &config,
                &predictions,
                &reference,
                clips.as_deref(),
                g.out.as_deref(),
                g.force,
            )?;
            Ok(format!(
                "{}{TABLE_ROW_HEADER}\n{}\n",
                report.to_text(&config.synth.vocabulary),
                report.table_row()
            ))
        }
        Command::Gradcheck { broken_backward } => {
            let (text, pass) = cmd_gradcheck(config.seed, broken_backward)?;
            if let Some(out) = g.out.as_deref() {
                prepare_out_dir(out, g.force)?;
                write_text(&out.join("gradcheck.tsv"), &text)?;
            }
            if pass {
                Ok(text)
            } else {
                Err(Error::GradCheck(text))
            }
        }
        Command::Experiment { data, smoke } => {
            cmd_experiment(&config, data.as_deref(), smoke, require_out(g)?, g.force)
        }
    }
}

/// Process exit status for a result: 0 success, 1 validation error, 2 runtime error.
pub fn exit_code(result: &Result<String>) -> i32 {
    match result {
        Ok(_) => 0,
        Err(e) if e.is_validation() => 1,
        Err(_) => 2,
    }
}
