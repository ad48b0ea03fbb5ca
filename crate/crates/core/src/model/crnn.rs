use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{CrnnConfig, Modality, MEL_BINS, NUM_STACKS, POOL_SCHEDULE, TIME_REDUCTION};
use super::pooling::{linear_pool, linear_pool_backward};
use crate::error::{config_err, data_err, shape_err, Error, Result};
use crate::layers::{
    join, AvgPool2d, BatchNorm2d, BiGru, Conv2d, Dropout, Layer, Linear, Mode, Relu, Sigmoid,
};
use crate::tensor::{Param, Real, Tensor};

/// Convolution, batch normalization, ReLU, dropout, average pooling.
#[derive(Clone, Debug)]
pub struct ConvStack<T = f32> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm2d<T>,
    relu: Relu<T>,
    dropout: Dropout<T>,
    pool: AvgPool2d,
}

impl<T: Real> ConvStack<T> {
    fn new<R: Rng + ?Sized>(
        cin: usize,
        cout: usize,
        pool: (usize, usize),
        rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Ok(Self {
            conv: Conv2d::new(cin, cout, rng),
            bn: BatchNorm2d::new(cout),
            relu: Relu::new(),
            dropout: Dropout::new(rate)?,
            pool: AvgPool2d::new(pool.0, pool.1),
        })
    }
}

impl<T: Real> Layer<T> for ConvStack<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        let y = self.conv.forward(x, mode, rng)?;
        let y = self.bn.forward(&y, mode, rng)?;
        let y = self.relu.forward(&y, mode, rng)?;
        let y = self.dropout.forward(&y, mode, rng)?;
        self.pool.forward(&y, mode, rng)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.pool.backward(grad_out)?;
        let g = self.dropout.backward(&g)?;
        let g = self.relu.backward(&g)?;
        let g = self.bn.backward(&g)?;
        self.conv.backward(&g)
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        self.conv.params(&join(prefix, "conv"), out);
        self.bn.params(&join(prefix, "bn"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        self.conv.params_mut(&join(prefix, "conv"), out);
        self.bn.params_mut(&join(prefix, "bn"), out);
    }

    fn buffers<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor<T>)>) {
        self.bn.buffers(&join(prefix, "bn"), out);
    }

    fn buffers_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.bn.buffers_mut(&join(prefix, "bn"), out);
    }
}

/// Linear map, ReLU, dropout: pretrained features to a small embedding.
#[derive(Clone, Debug)]
pub struct Projection<T = f32> {
    pub linear: Linear<T>,
    relu: Relu<T>,
    dropout: Dropout<T>,
}

impl<T: Real> Projection<T> {
    fn new<R: Rng + ?Sized>(din: usize, dout: usize, rate: f64, rng: &mut R) -> Result<Self> {
        Ok(Self {
            linear: Linear::new(din, dout, rng),
            relu: Relu::new(),
            dropout: Dropout::new(rate)?,
        })
    }
}

impl<T: Real> Layer<T> for Projection<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode, rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        let y = self.linear.forward(x, mode, rng)?;
        let y = self.relu.forward(&y, mode, rng)?;
        self.dropout.forward(&y, mode, rng)
    }

    fn backward(&mut self, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.dropout.backward(grad_out)?;
        let g = self.relu.backward(&g)?;
        self.linear.backward(&g)
    }

    fn params<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Param<T>)>) {
        self.linear.params(&join(prefix, "linear"), out);
    }

    fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Param<T>)>) {
        self.linear.params_mut(&join(prefix, "linear"), out);
    }
}

/// Model inputs for one batch. Tensors for modalities the model does not use are ignored.
#[derive(Clone, Copy, Debug, Default)]
pub struct ModelInput<'a, T = f32> {
    /// `[B, 1, T, 128]`
    pub spectral: Option<&'a Tensor<T>>,
    /// `[B, T/4, pre_audio_dim]`
    pub pre_audio: Option<&'a Tensor<T>>,
    /// `[B, T/4, pre_visual_dim]`
    pub pre_visual: Option<&'a Tensor<T>>,
    /// Valid output frames per clip; `None` means every clip fills the batch.
    pub lengths: Option<&'a [usize]>,
}

impl<'a, T> ModelInput<'a, T> {
    pub fn get(&self, m: Modality) -> Option<&'a Tensor<T>> {
        match m {
            Modality::Spectral => self.spectral,
            Modality::PreAudio => self.pre_audio,
            Modality::PreVisual => self.pre_visual,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelOutput<T = f32> {
    /// `[B, T_out, n_classes]`; frames past a clip's length are zero.
    pub frame_probs: Tensor<T>,
    /// `[B, n_classes]`
    pub clip_probs: Tensor<T>,
    pub lengths: Vec<usize>,
}

/// Probabilities of one clip, restricted to its valid frames.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipForward<T = f32> {
    /// `[len, n_classes]`
    pub frame_probs: Tensor<T>,
    pub clip_probs: Vec<T>,
}

impl<T: Real> ModelOutput<T> {
    pub fn batch_size(&self) -> usize {
        self.clip_probs.dim(0)
    }

    pub fn clip(&self, b: usize) -> ClipForward<T> {
        let c = self.clip_probs.dim(1);
        let len = self.lengths[b];
        let frames = self.frame_probs.slice_outer(b)[..len * c].to_vec();
        ClipForward {
            frame_probs: Tensor::from_vec(&[len, c], frames).expect("frame slice"),
            clip_probs: self.clip_probs.slice_outer(b).to_vec(),
        }
    }

    pub fn clips(&self) -> Vec<ClipForward<T>> {
        (0..self.batch_size()).map(|b| self.clip(b)).collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct InputGrads<T = f32> {
    pub spectral: Option<Tensor<T>>,
    pub pre_audio: Option<Tensor<T>>,
    pub pre_visual: Option<Tensor<T>>,
}

#[derive(Clone, Debug)]
struct ForwardCache<T> {
    lengths: Vec<usize>,
    frame_probs: Tensor<T>,
    streams: Vec<(Modality, usize)>,
}

/// Convolutional encoder, optional pretrained-feature projections, BiGRU,
/// linear head with sigmoid, and linear pooling.
#[derive(Clone, Debug)]
pub struct Crnn<T = f32> {
    config: CrnnConfig,
    pub cnn: Option<Vec<ConvStack<T>>>,
    pub proj_audio: Option<Projection<T>>,
    pub proj_visual: Option<Projection<T>>,
    pub gru: BiGru<T>,
    pub head: Linear<T>,
    sigmoid: Sigmoid<T>,
    cache: Option<ForwardCache<T>>,
}

impl<T: Real> Crnn<T> {
    pub fn new<R: Rng + ?Sized>(config: CrnnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let rate = config.dropout_rate;
        let cnn = if config.use_spectral {
            let mut cin = 1;
            let mut stacks = Vec::with_capacity(NUM_STACKS);
            for (&cout, &pool) in config.conv_channels.iter().zip(POOL_SCHEDULE.iter()) {
                stacks.push(ConvStack::new(cin, cout, pool, rate, rng)?);
                cin = cout;
            }
            Some(stacks)
        } else {
            None
        };
        let proj_audio = if config.use_pre_audio {
            Some(Projection::new(
                config.pre_audio_dim,
                config.emb_audio,
                rate,
                rng,
            )?)
        } else {
            None
        };
        let proj_visual = if config.use_pre_visual {
            Some(Projection::new(
                config.pre_visual_dim,
                config.emb_visual,
                rate,
                rng,
            )?)
        } else {
            None
        };
        let gru = BiGru::new(
            config.fused_dim(),
            config.gru_hidden,
            config.gru_layers,
            rng,
        );
        let head = Linear::new(2 * config.gru_hidden, config.n_classes, rng);
        Ok(Self {
            config,
            cnn,
            proj_audio,
            proj_visual,
            gru,
            head,
            sigmoid: Sigmoid::new(),
            cache: None,
        })
    }

    pub fn config(&self) -> &CrnnConfig {
        &self.config
    }

    pub fn n_classes(&self) -> usize {
        self.config.n_classes
    }

    /// `[B,1,T,128] -> [B,T/4,C]`: the frequency axis is pooled down to one bin and dropped.
    pub fn cnn_encode(
        &mut self,
        spectral: &Tensor<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<Tensor<T>> {
        let stacks = self
            .cnn
            .as_mut()
            .ok_or_else(|| config_err!("model has no spectral encoder"))?;
        check_spectral(spectral)?;
        let mut y = spectral.clone();
        for stack in stacks.iter_mut() {
            y = stack.forward(&y, mode, rng)?;
        }
        // [B,C,T',1] -> [B,T',C]
        let (b, c, t) = (y.dim(0), y.dim(1), y.dim(2));
        let mut out = Tensor::zeros(&[b, t, c]);
        for bi in 0..b {
            for ci in 0..c {
                for ti in 0..t {
                    out.data_mut()[(bi * t + ti) * c + ci] = y.data()[(bi * c + ci) * t + ti];
                }
            }
        }
        Ok(out)
    }

    fn cnn_backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let stacks = self
            .cnn
            .as_mut()
            .ok_or_else(|| config_err!("model has no spectral encoder"))?;
        let (b, t, c) = (grad.dim(0), grad.dim(1), grad.dim(2));
        let mut g = Tensor::zeros(&[b, c, t, 1]);
        for bi in 0..b {
            for ci in 0..c {
                for ti in 0..t {
                    g.data_mut()[(bi * c + ci) * t + ti] = grad.data()[(bi * t + ti) * c + ci];
                }
            }
        }
        for stack in stacks.iter_mut().rev() {
            g = stack.backward(&g)?;
        }
        Ok(g)
    }

    /// Linear + ReLU (+ dropout in training modes) on `[B,T',D]` pretrained features.
    pub fn project_pretrained(
        &mut self,
        modality: Modality,
        features: &Tensor<T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<Tensor<T>> {
        let proj = match modality {
            Modality::PreAudio => self.proj_audio.as_mut(),
            Modality::PreVisual => self.proj_visual.as_mut(),
            Modality::Spectral => None,
        }
        .ok_or_else(|| config_err!("model has no projection for {}", modality.name()))?;
        if features.ndim() != 3 || features.dim(2) != proj.linear.in_dim() {
            return Err(shape_err!(
                "{} features must be [B,T',{}], got {:?}",
                modality.name(),
                proj.linear.in_dim(),
                features.shape()
            ));
        }
        proj.forward(features, mode, rng)
    }

    /// Runs the full model. Pretrained streams must have exactly a quarter of
    /// the spectral frames.
    pub fn forward(
        &mut self,
        input: &ModelInput<'_, T>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<ModelOutput<T>> {
        let mut streams: Vec<(Modality, Tensor<T>)> = Vec::new();
        for m in self.config.modalities() {
            let x = input
                .get(m)
                .ok_or_else(|| data_err!("missing {} input for a model that uses it", m.name()))?;
            let s = match m {
                Modality::Spectral => self.cnn_encode(x, mode, rng)?,
                _ => self.project_pretrained(m, x, mode, rng)?,
            };
            streams.push((m, s));
        }
        let fused = fuse(&streams)?;
        let (b, t) = (fused.dim(0), fused.dim(1));
        let lengths = match input.lengths {
            Some(l) => {
                if l.len() != b || l.iter().any(|&n| n == 0 || n > t) {
                    return Err(shape_err!(
                        "lengths {:?} invalid for batch of {b} x {t} frames",
                        l
                    ));
                }
                l.to_vec()
            }
            None => vec![t; b],
        };

        let h = self.gru.forward_masked(&fused, &lengths)?;
        let logits = self.head.forward(&h, mode, rng)?;
        let mut frame_probs = self.sigmoid.forward(&logits, mode, rng)?;
        let c = self.config.n_classes;
        let mut clip_probs = Tensor::zeros(&[b, c]);
        for bi in 0..b {
            let frames = frame_probs.slice_outer_mut(bi);
            frames[lengths[bi] * c..].fill(T::zero());
            let pooled = linear_pool(frames, c, lengths[bi]);
            clip_probs.slice_outer_mut(bi).copy_from_slice(&pooled);
        }
        self.cache = Some(ForwardCache {
            lengths: lengths.clone(),
            frame_probs: frame_probs.clone(),
            streams: streams.iter().map(|(m, s)| (*m, s.dim(2))).collect(),
        });
        Ok(ModelOutput {
            frame_probs,
            clip_probs,
            lengths,
        })
    }

    /// Backpropagates loss gradients with respect to frame and clip
    /// probabilities, accumulating parameter gradients.
    pub fn backward(
        &mut self,
        grad_frames: &Tensor<T>,
        grad_clips: &Tensor<T>,
    ) -> Result<InputGrads<T>> {
        let cache = self
            .cache
            .take()
            .ok_or(Error::BackwardBeforeForward("crnn"))?;
        let result = self.backward_cached(&cache, grad_frames, grad_clips);
        self.cache = Some(cache);
        result
    }

    fn backward_cached(
        &mut self,
        cache: &ForwardCache<T>,
        grad_frames: &Tensor<T>,
        grad_clips: &Tensor<T>,
    ) -> Result<InputGrads<T>> {
        let probs = &cache.frame_probs;
        grad_frames.expect_shape(probs.shape())?;
        let (b, t, c) = (probs.dim(0), probs.dim(1), probs.dim(2));
        grad_clips.expect_shape(&[b, c])?;

        let mut g = grad_frames.clone();
        for bi in 0..b {
            let len = cache.lengths[bi];
            let gf = g.slice_outer_mut(bi);
            gf[len * c..].fill(T::zero());
            linear_pool_backward(
                probs.slice_outer(bi),
                c,
                len,
                grad_clips.slice_outer(bi),
                gf,
            );
        }
        let g = self.sigmoid.backward(&g)?;
        let g = self.head.backward(&g)?;
        let g = self.gru.backward_masked(&g)?;

        let total: usize = cache.streams.iter().map(|s| s.1).sum();
        let mut grads = InputGrads::default();
        let mut offset = 0;
        for &(m, d) in &cache.streams {
            let mut gs = Tensor::zeros(&[b, t, d]);
            for (dst, src) in gs.data_mut().chunks_mut(d).zip(g.data().chunks(total)) {
                dst.copy_from_slice(&src[offset..offset + d]);
            }
            offset += d;
            match m {
                Modality::Spectral => grads.spectral = Some(self.cnn_backward(&gs)?),
                Modality::PreAudio => {
                    grads.pre_audio = Some(
                        self.proj_audio
                            .as_mut()
                            .expect("audio projection")
                            .backward(&gs)?,
                    )
                }
                Modality::PreVisual => {
                    grads.pre_visual = Some(
                        self.proj_visual
                            .as_mut()
                            .expect("visual projection")
                            .backward(&gs)?,
                    )
                }
            }
        }
        Ok(grads)
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn params(&self) -> Vec<(String, &Param<T>)> {
        let mut out = Vec::new();
        if let Some(stacks) = &self.cnn {
            for (i, s) in stacks.iter().enumerate() {
                s.params(&format!("cnn.s{i}"), &mut out);
            }
        }
        if let Some(p) = &self.proj_audio {
            p.params("proj_audio", &mut out);
        }
        if let Some(p) = &self.proj_visual {
            p.params("proj_visual", &mut out);
        }
        self.gru.params("gru", &mut out);
        self.head.params("head", &mut out);
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out = Vec::new();
        if let Some(stacks) = &mut self.cnn {
            for (i, s) in stacks.iter_mut().enumerate() {
                s.params_mut(&format!("cnn.s{i}"), &mut out);
            }
        }
        if let Some(p) = &mut self.proj_audio {
            p.params_mut("proj_audio", &mut out);
        }
        if let Some(p) = &mut self.proj_visual {
            p.params_mut("proj_visual", &mut out);
        }
        self.gru.params_mut("gru", &mut out);
        self.head.params_mut("head", &mut out);
        out
    }

    pub fn buffers(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        if let Some(stacks) = &self.cnn {
            for (i, s) in stacks.iter().enumerate() {
                s.buffers(&format!("cnn.s{i}"), &mut out);
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        if let Some(stacks) = &mut self.cnn {
            for (i, s) in stacks.iter_mut().enumerate() {
                s.buffers_mut(&format!("cnn.s{i}"), &mut out);
            }
        }
        out
    }

    /// Parameter values followed by buffers, in a fixed order.
    pub fn state(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = self
            .params()
            .into_iter()
            .map(|(n, p)| (n, &p.value))
            .collect();
        out.extend(self.buffers());
        out
    }

    pub fn state_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut params: Vec<(String, &mut Tensor<T>)> = Vec::new();
        let mut buffers: Vec<(String, &mut Tensor<T>)> = Vec::new();
        if let Some(stacks) = &mut self.cnn {
            for (i, s) in stacks.iter_mut().enumerate() {
                let conv = &mut s.conv;
                params.push((format!("cnn.s{i}.conv.weight"), &mut conv.weight.value));
                params.push((format!("cnn.s{i}.conv.bias"), &mut conv.bias.value));
                let BatchNorm2d {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                    ..
                } = &mut s.bn;
                params.push((format!("cnn.s{i}.bn.gamma"), &mut gamma.value));
                params.push((format!("cnn.s{i}.bn.beta"), &mut beta.value));
                buffers.push((format!("cnn.s{i}.bn.running_mean"), running_mean));
                buffers.push((format!("cnn.s{i}.bn.running_var"), running_var));
            }
        }
        let mut rest = Vec::new();
        if let Some(p) = &mut self.proj_audio {
            p.params_mut("proj_audio", &mut rest);
        }
        if let Some(p) = &mut self.proj_visual {
            p.params_mut("proj_visual", &mut rest);
        }
        self.gru.params_mut("gru", &mut rest);
        self.head.params_mut("head", &mut rest);
        params.extend(rest.into_iter().map(|(n, p)| (n, &mut p.value)));
        params.extend(buffers);
        params
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|(_, p)| p.value.len()).sum()
    }

    /// Same architecture in another precision.
    pub fn cast<U: Real>(&self) -> Crnn<U> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut out = Crnn::<U>::new(self.config.clone(), &mut rng).expect("validated config");
        for ((dn, dst), (sn, src)) in out.state_mut().into_iter().zip(self.state()) {
            debug_assert_eq!(dn, sn);
            *dst = src.cast();
        }
        out
    }
}

fn check_spectral<T: Real>(x: &Tensor<T>) -> Result<()> {
    if x.ndim() != 4 || x.dim(1) != 1 {
        return Err(shape_err!(
            "spectral input must be [B,1,T,{MEL_BINS}], got {:?}",
            x.shape()
        ));
    }
    if x.dim(3) != MEL_BINS {
        return Err(config_err!(
            "spectral input needs exactly {MEL_BINS} mel bins (seven halvings to one), got {}",
            x.dim(3)
        ));
    }
    if x.dim(2) == 0 || !x.dim(2).is_multiple_of(TIME_REDUCTION) {
        return Err(shape_err!(
            "spectral frame count {} must be a positive multiple of {TIME_REDUCTION}",
            x.dim(2)
        ));
    }
    Ok(())
}

/// Concatenates `[B,T,·]` streams along the feature axis in the given order.
pub fn fuse<T: Real>(streams: &[(Modality, Tensor<T>)]) -> Result<Tensor<T>> {
    let (first_m, first) = streams
        .first()
        .ok_or_else(|| config_err!("nothing to fuse"))?;
    let (b, t) = (first.dim(0), first.dim(1));
    for (m, s) in streams {
        if s.ndim() != 3 || s.dim(0) != b {
            return Err(shape_err!("{} stream has shape {:?}", m.name(), s.shape()));
        }
        if s.dim(1) != t {
            return Err(Error::Alignment(format!(
                "{} stream has {} frames but {} has {t}; pretrained frames must equal spectral frames / {TIME_REDUCTION}",
                m.name(),
                s.dim(1),
                first_m.name()
            )));
        }
    }
    if streams.len() == 1 {
        return Ok(first.clone());
    }
    let total: usize = streams.iter().map(|(_, s)| s.dim(2)).sum();
    let mut out = Tensor::zeros(&[b, t, total]);
    let mut offset = 0;
    for (_, s) in streams {
        let d = s.dim(2);
        for (dst, src) in out.data_mut().chunks_mut(total).zip(s.data().chunks(d)) {
            dst[offset..offset + d].copy_from_slice(src);
        }
        offset += d;
    }
    Ok(out)
}
