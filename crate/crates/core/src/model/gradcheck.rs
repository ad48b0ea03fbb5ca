use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Crnn, CrnnConfig, ModelInput, MEL_BINS, TIME_REDUCTION};
use crate::error::Result;
use crate::layers::gradcheck::{
    grad_check, GradCheckReport, GradCheckable, LayerProbe, Sabotaged, DEFAULT_EPS,
};
use crate::layers::Mode;
use crate::layers::{AvgPool2d, BatchNorm2d, BiGru, Conv2d, Dropout, Linear, Relu};
use crate::tensor::{Param, Tensor};

/// Tiny widths that keep a full finite-difference sweep cheap while exercising
/// every layer type and all three input streams.
pub fn micro_config() -> CrnnConfig {
    CrnnConfig {
        n_classes: 3,
        pre_audio_dim: 5,
        pre_visual_dim: 6,
        emb_audio: 4,
        emb_visual: 2,
        gru_hidden: 3,
        conv_channels: vec![2, 2, 2, 2, 2, 2, 2],
        ..CrnnConfig::default()
    }
}

/// The whole CRNN under a fixed random read-out of its frame and clip
/// probabilities, in 64-bit.
pub struct CrnnProbe {
    pub model: Crnn<f64>,
    pub spectral: Option<Param<f64>>,
    pub pre_audio: Option<Param<f64>>,
    pub pre_visual: Option<Param<f64>>,
    pub lengths: Vec<usize>,
    pub frame_weights: Tensor<f64>,
    pub clip_weights: Tensor<f64>,
    pub mode: Mode,
    pub seed: u64,
}

impl CrnnProbe {
    /// `spectral_frames` must be a multiple of 4. In eval mode the batch-norm
    /// running statistics are randomized so they are not the identity.
    pub fn new(
        config: CrnnConfig,
        batch: usize,
        spectral_frames: usize,
        mode: Mode,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Crnn::<f64>::new(config.clone(), &mut rng)?;
        for (name, buf) in model.buffers_mut() {
            let var = name.ends_with("running_var");
            for v in buf.data_mut() {
                *v = if var {
                    rng.random_range(0.5..2.0)
                } else {
                    rng.random_range(-0.5..0.5)
                };
            }
        }
        for (name, p) in model.params_mut() {
            // non-zero biases and affine terms so every path carries signal
            if name.ends_with("bias")
                || name.ends_with("b_ih")
                || name.ends_with("b_hh")
                || name.ends_with("beta")
            {
                for v in p.value.data_mut() {
                    *v = rng.random_range(-0.3..0.3);
                }
            }
        }
        let t_out = spectral_frames / TIME_REDUCTION;
        let mut rand_param =
            |shape: &[usize]| Param::new(Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)));
        let spectral = config
            .use_spectral
            .then(|| rand_param(&[batch, 1, spectral_frames, MEL_BINS]));
        let pre_audio = config
            .use_pre_audio
            .then(|| rand_param(&[batch, t_out, config.pre_audio_dim]));
        let pre_visual = config
            .use_pre_visual
            .then(|| rand_param(&[batch, t_out, config.pre_visual_dim]));
        let frame_weights = rand_param(&[batch, t_out, config.n_classes]).value;
        let clip_weights = rand_param(&[batch, config.n_classes]).value;
        Ok(Self {
            model,
            spectral,
            pre_audio,
            pre_visual,
            lengths: vec![t_out; batch],
            frame_weights,
            clip_weights,
            mode,
            seed,
        })
    }

    fn objective(&mut self) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed);
        let input = ModelInput {
            spectral: self.spectral.as_ref().map(|p| &p.value),
            pre_audio: self.pre_audio.as_ref().map(|p| &p.value),
            pre_visual: self.pre_visual.as_ref().map(|p| &p.value),
            lengths: Some(&self.lengths),
        };
        let out = self.model.forward(&input, self.mode, &mut rng)?;
        let dot = |a: &Tensor<f64>, b: &Tensor<f64>| {
            a.data()
                .iter()
                .zip(b.data())
                .map(|(x, y)| x * y)
                .sum::<f64>()
        };
        Ok(dot(&out.frame_probs, &self.frame_weights) + dot(&out.clip_probs, &self.clip_weights))
    }
}

impl GradCheckable for CrnnProbe {
    fn loss(&mut self) -> Result<f64> {
        self.objective()
    }

    fn compute_gradients(&mut self) -> Result<()> {
        for (_, p) in self.tensors() {
            p.zero_grad();
        }
        self.objective()?;
        let grads = self
            .model
            .backward(&self.frame_weights, &self.clip_weights)?;
        for (slot, g) in [
            (&mut self.spectral, grads.spectral),
            (&mut self.pre_audio, grads.pre_audio),
            (&mut self.pre_visual, grads.pre_visual),
        ] {
            if let (Some(p), Some(g)) = (slot.as_mut(), g) {
                p.grad = g;
            }
        }
        Ok(())
    }

    fn tensors(&mut self) -> Vec<(String, &mut Param<f64>)> {
        let mut out = self.model.params_mut();
        for (name, slot) in [
            ("input.spectral", &mut self.spectral),
            ("input.pre_audio", &mut self.pre_audio),
            ("input.pre_visual", &mut self.pre_visual),
        ] {
            if let Some(p) = slot.as_mut() {
                out.push((name.to_string(), p));
            }
        }
        out
    }
}
/// Tolerance on the worst relative error of a passing check.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Named finite-difference reports for every layer type and the micro CRNN in
/// eval and perturb modes. With `sabotage`, every analytic gradient is scaled
/// by 1.5 so the suite must fail.
pub fn gradcheck_suite(seed: u64, sabotage: bool) -> Result<Vec<(String, GradCheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = |shape: &[usize], rng: &mut ChaCha8Rng| {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    };
    let mut targets: Vec<(String, Box<dyn GradCheckable>)> = Vec::new();
    let conv = Conv2d::<f64>::new(2, 3, &mut rng);
    let x = input(&[2, 2, 4, 6], &mut rng);
    targets.push((
        "conv2d".into(),
        Box::new(LayerProbe::new(conv, x, Mode::Train, seed)?),
    ));
    for (name, mode) in [
        ("batchnorm.train", Mode::Train),
        ("batchnorm.eval", Mode::Eval),
    ] {
        let mut bn = BatchNorm2d::<f64>::new(3);
        for v in bn.running_var.data_mut() {
            *v = rng.random_range(0.5..2.0);
        }
        let x = input(&[2, 3, 2, 4], &mut rng);
        targets.push((name.into(), Box::new(LayerProbe::new(bn, x, mode, seed)?)));
    }
    let x = input(&[3, 7], &mut rng);
    targets.push((
        "relu".into(),
        Box::new(LayerProbe::new(Relu::<f64>::new(), x, Mode::Train, seed)?),
    ));
    let x = input(&[4, 9], &mut rng);
    targets.push((
        "dropout".into(),
        Box::new(LayerProbe::new(
            Dropout::<f64>::new(0.33)?,
            x,
            Mode::Train,
            seed,
        )?),
    ));
    let x = input(&[1, 2, 4, 6], &mut rng);
    targets.push((
        "avgpool2d".into(),
        Box::new(LayerProbe::new(AvgPool2d::new(2, 2), x, Mode::Train, seed)?),
    ));
    let lin = Linear::<f64>::new(5, 3, &mut rng);
    let x = input(&[2, 4, 5], &mut rng);
    targets.push((
        "linear".into(),
        Box::new(LayerProbe::new(lin, x, Mode::Train, seed)?),
    ));
    let gru = BiGru::<f64>::new(3, 4, 2, &mut rng);
    let x = input(&[2, 5, 3], &mut rng);
    targets.push((
        "bigru".into(),
        Box::new(LayerProbe::new(gru, x, Mode::Train, seed)?),
    ));
    for (name, mode) in [("crnn.eval", Mode::Eval), ("crnn.perturb", Mode::Perturb)] {
        targets.push((
            name.into(),
            Box::new(CrnnProbe::new(micro_config(), 2, 8, mode, seed)?),
        ));
    }

    let mut reports = Vec::with_capacity(targets.len());
    for (name, mut target) in targets {
        let report = if sabotage {
            grad_check(
                &mut Sabotaged {
                    inner: target,
                    factor: 1.5,
                },
                DEFAULT_EPS,
            )?
        } else {
            grad_check(&mut target, DEFAULT_EPS)?
        };
        reports.push((name, report));
    }
    Ok(reports)
}
