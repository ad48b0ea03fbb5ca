use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{Adam, AdamConfig};
use super::batch::{compose_batch, predict_records};
use super::ema::TeacherState;
use super::loss::{classification_loss, consistency_loss, total_loss, Outputs};
use super::schedule::LrSchedule;
use crate::dataio::{ClipRecord, Dataset};
use crate::error::{config_err, Error, Result};
use crate::kv::parse_num;
use crate::layers::Mode;
use crate::metrics::{evaluate_run, EvalReport, MetricConfig};
use crate::model::{Crnn, CrnnConfig};
use crate::tensor::Tensor;

pub const LOG_HEADER: &str = "epoch\tstep\tlr\tclass_loss\tcons_loss\ttotal\tval_clip_f1";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub batch_weak: usize,
    pub batch_unlabeled: usize,
    pub class_weight: f64,
    pub consistency_weight: f64,
    pub schedule: LrSchedule,
    pub adam: AdamConfig,
    pub ema_decay: f64,
    /// Clips per inference batch during validation.
    pub eval_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    pub fn full() -> Self {
        Self {
            epochs: 200,
            batches_per_epoch: 250,
            batch_weak: 24,
            batch_unlabeled: 24,
            class_weight: 1.0,
            consistency_weight: 2.0,
            schedule: LrSchedule::default(),
            adam: AdamConfig::default(),
            ema_decay: 0.999,
            eval_batch: 32,
        }
    }

    pub fn desk() -> Self {
        Self {
            epochs: 12,
            batches_per_epoch: 25,
            batch_weak: 8,
            batch_unlabeled: 8,
            schedule: LrSchedule {
                ramp_steps: 100,
                ..LrSchedule::default()
            },
            ema_decay: 0.99,
            ..Self::full()
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full()),
            other => Err(config_err!(
                "unknown training profile {other:?} (expected desk or full)"
            )),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batches_per_epoch == 0
            || self.batch_weak + self.batch_unlabeled == 0
            || self.eval_batch == 0
        {
            return Err(config_err!("batch counts and sizes must be positive"));
        }
        if self.class_weight < 0.0 || self.consistency_weight < 0.0 {
            return Err(config_err!("loss weights must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.ema_decay) {
            return Err(config_err!(
                "ema_decay must be in [0,1], got {}",
                self.ema_decay
            ));
        }
        self.schedule.validate()
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("epochs", self.epochs.to_string()),
            ("batches_per_epoch", self.batches_per_epoch.to_string()),
            ("batch_weak", self.batch_weak.to_string()),
            ("batch_unlabeled", self.batch_unlabeled.to_string()),
            ("class_weight", self.class_weight.to_string()),
            ("consistency_weight", self.consistency_weight.to_string()),
            ("lr_peak", self.schedule.peak.to_string()),
            ("lr_ramp_steps", self.schedule.ramp_steps.to_string()),
            (
                "lr_decay_per_step",
                self.schedule.decay_per_step.to_string(),
            ),
            ("adam_beta1", self.adam.beta1.to_string()),
            ("adam_beta2", self.adam.beta2.to_string()),
            ("adam_epsilon", self.adam.epsilon.to_string()),
            ("ema_decay", self.ema_decay.to_string()),
            ("eval_batch", self.eval_batch.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "epochs" => self.epochs = parse_num(value)?,
            "batches_per_epoch" => self.batches_per_epoch = parse_num(value)?,
            "batch_weak" => self.batch_weak = parse_num(value)?,
            "batch_unlabeled" => self.batch_unlabeled = parse_num(value)?,
            "class_weight" => self.class_weight = parse_num(value)?,
            "consistency_weight" => self.consistency_weight = parse_num(value)?,
            "lr_peak" => self.schedule.peak = parse_num(value)?,
            "lr_ramp_steps" => self.schedule.ramp_steps = parse_num(value)?,
            "lr_decay_per_step" => self.schedule.decay_per_step = parse_num(value)?,
            "adam_beta1" => self.adam.beta1 = parse_num(value)?,
            "adam_beta2" => self.adam.beta2 = parse_num(value)?,
            "adam_epsilon" => self.adam.epsilon = parse_num(value)?,
            "ema_decay" => self.ema_decay = parse_num(value)?,
            "eval_batch" => self.eval_batch = parse_num(value)?,
            _ => return Err(config_err!("unknown training key {key:?}")),
        }
        Ok(())
    }
}

/// One line of the run log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub class_loss: f64,
    pub cons_loss: f64,
    pub total: f64,
    pub val_clip_f1: f64,
}

impl EpochRecord {
    pub fn line(&self) -> String {
        format!(
            "{}\t{}\t{:.6e}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            self.epoch,
            self.step,
            self.lr,
            self.class_loss,
            self.cons_loss,
            self.total,
            self.val_clip_f1
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub initial: Crnn<f32>,
    pub student: Crnn<f32>,
    pub teacher: Crnn<f32>,
    pub epochs: Vec<EpochRecord>,
    pub steps: u64,
}

impl TrainOutcome {
    /// Run log: `#` lines with the resolved settings, the header, one line per epoch.
    pub fn log_text(&self, settings: &[(String, String)]) -> String {
        let mut s = String::new();
        for (k, v) in settings {
            let _ = writeln!(s, "# {k}={v}");
        }
        let _ = writeln!(s, "{LOG_HEADER}");
        for e in &self.epochs {
            let _ = writeln!(s, "{}", e.line());
        }
        s
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Eval-mode predictions of `model` on `records` scored against `reference`.
pub fn evaluate_model(
    model: &mut Crnn<f32>,
    records: &[&ClipRecord],
    reference: &crate::metrics::EventMap,
    metric: &MetricConfig,
    eval_batch: usize,
) -> Result<EvalReport> {
    let preds = predict_records(model, records, eval_batch)?;
    evaluate_run(&preds, reference, model.n_classes(), metric)
}

/// Mean-teacher training of a freshly initialised student.
pub fn train(
    model_config: &CrnnConfig,
    config: &TrainConfig,
    seed: u64,
    data: &Dataset,
    metric: &MetricConfig,
) -> Result<TrainOutcome> {
    let student = Crnn::new(model_config.clone(), &mut stream_rng(seed, 0))?;
    train_from(student, config, seed, data, metric)
}

/// Mean-teacher training starting from `student`; the teacher starts as its copy.
pub fn train_from(
    mut student: Crnn<f32>,
    config: &TrainConfig,
    seed: u64,
    data: &Dataset,
    metric: &MetricConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let n_classes = data.manifest.n_classes();
    if student.n_classes() != n_classes {
        return Err(config_err!(
            "model has {} classes but the dataset vocabulary has {n_classes}",
            student.n_classes()
        ));
    }
    let modalities = student.config().modalities();
    for m in &modalities {
        if !data.manifest.has(*m) {
            return Err(config_err!(
                "model uses {} but the dataset does not provide it",
                m.name()
            ));
        }
    }
    if config.epochs > 0 && data.weak.is_empty() && config.batch_weak > 0 {
        return Err(config_err!("weak pool required for training"));
    }
    let initial = student.clone();
    let mut teacher = TeacherState::new(&student, config.ema_decay)?;
    let shapes: Vec<Vec<usize>> = student
        .params()
        .iter()
        .map(|(_, p)| p.shape().to_vec())
        .collect();
    let mut adam = Adam::new(config.adam, &shapes);
    let mut batch_rng = stream_rng(seed, 1);
    let mut student_rng = stream_rng(seed, 2);
    let mut teacher_rng = stream_rng(seed, 3);
    let val: Vec<&ClipRecord> = data.val.iter().collect();
    let mut step: u64 = 0;
    let mut epochs = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let (mut class_sum, mut cons_sum, mut total_sum) = (0.0, 0.0, 0.0);
        let mut lr = 0.0;
        for b in 0..config.batches_per_epoch {
            let batch = compose_batch(
                &data.weak,
                &data.unlabeled,
                config.batch_weak,
                config.batch_unlabeled,
                &modalities,
                n_classes,
                &mut batch_rng,
            )?;
            lr = config.schedule.lr_at(step);
            let input = batch.input();
            let s_out = student.forward(&input, Mode::Train, &mut student_rng)?;
            let t_out = teacher
                .model
                .forward(&input, Mode::Perturb, &mut teacher_rng)?;

            let nw = batch.n_weak * n_classes;
            let (class_loss, g_class) =
                classification_loss(&s_out.clip_probs.data()[..nw], &batch.labels)?;
            let (cons_loss, g_clip, g_frames) = consistency_loss(
                &Outputs {
                    clip: &s_out.clip_probs,
                    frames: &s_out.frame_probs,
                    lengths: &s_out.lengths,
                },
                &Outputs {
                    clip: &t_out.clip_probs,
                    frames: &t_out.frame_probs,
                    lengths: &t_out.lengths,
                },
            )?;
            let total = total_loss(
                class_loss,
                cons_loss,
                config.class_weight,
                config.consistency_weight,
            )
            .map_err(|e| {
                Error::NonFinite(format!("epoch {epoch}, batch {b} (step {step}): {e}"))
            })?;

            let (wc, wk) = (config.class_weight as f32, config.consistency_weight as f32);
            let mut grad_clip: Tensor<f32> = g_clip;
            for (i, g) in grad_clip.data_mut().iter_mut().enumerate() {
                *g *= wk;
                if i < nw {
                    *g += wc * g_class[i];
                }
            }
            let grad_frames = g_frames.map(|g| g * wk);
            student.backward(&grad_frames, &grad_clip)?;
            adam.step(&mut student.params_mut(), lr)?;
            teacher.update(&student)?;

            class_sum += class_loss;
            cons_sum += cons_loss;
            total_sum += total;
            step += 1;
        }
        let n = config.batches_per_epoch as f64;
        let val_clip_f1 = if val.is_empty() {
            f64::NAN
        } else {
            evaluate_model(
                &mut student,
                &val,
                &data.val_strong,
                metric,
                config.eval_batch,
            )?
            .clip
            .f1
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            step,
            lr,
            class_loss: class_sum / n,
            cons_loss: cons_sum / n,
            total: total_sum / n,
            val_clip_f1,
        };
        log::info!("{}", record.line());
        epochs.push(record);
    }
    Ok(TrainOutcome {
        initial,
        student,
        teacher: teacher.model,
        epochs,
        steps: step,
    })
}
