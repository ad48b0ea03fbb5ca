use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sedfusion::layers::gradcheck::{grad_check, DEFAULT_EPS};
use sedfusion::layers::Mode;
use sedfusion::model::{
    fuse, micro_config, Crnn, CrnnConfig, CrnnProbe, Modality, ModelInput, MEL_BINS,
};
use sedfusion::tensor::Tensor;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(shape: &[usize], seed: u64) -> Tensor<f32> {
    use rand::Rng;
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| r.random_range(-1.0..1.0))
}

fn zero_model(config: CrnnConfig) -> Crnn<f32> {
    let mut m = Crnn::new(config, &mut rng(0)).unwrap();
    for (_, p) in m.params_mut() {
        p.value.fill(0.0);
    }
    m
}

#[test]
fn cnn_shape_law() {
    let mut model = Crnn::<f32>::new(CrnnConfig::spectral_only(), &mut rng(1)).unwrap();
    for t in [8usize, 16, 604] {
        let x = random(&[1, 1, t, MEL_BINS], t as u64);
        let out = model.cnn_encode(&x, Mode::Eval, &mut rng(0)).unwrap();
        assert_eq!(out.shape(), &[1, t / 4, 128]);
    }
    let bad = random(&[1, 1, 8, 64], 0);
    assert!(model
        .cnn_encode(&bad, Mode::Eval, &mut rng(0))
        .unwrap_err()
        .is_validation());
    let odd = random(&[1, 1, 10, MEL_BINS], 0);
    assert!(model.cnn_encode(&odd, Mode::Eval, &mut rng(0)).is_err());
}

#[test]
fn zero_model_outputs() {
    let mut model = zero_model(CrnnConfig::spectral_only());
    let x = Tensor::zeros(&[1, 1, 8, MEL_BINS]);
    let enc = model.cnn_encode(&x, Mode::Eval, &mut rng(0)).unwrap();
    assert!(enc.data().iter().all(|&v| v == 0.0));

    let x = random(&[2, 1, 16, MEL_BINS], 3);
    let input = ModelInput {
        spectral: Some(&x),
        ..Default::default()
    };
    let out = model.forward(&input, Mode::Eval, &mut rng(0)).unwrap();
    assert_eq!(out.frame_probs.shape(), &[2, 4, 10]);
    assert!(out.frame_probs.data().iter().all(|&p| p == 0.5));
    assert!(out.clip_probs.data().iter().all(|&p| p == 0.5));
}

#[test]
fn fused_dimensions() {
    assert_eq!(
        CrnnConfig::with_modalities(true, true, true).fused_dim(),
        148
    );
    assert_eq!(
        CrnnConfig::with_modalities(true, true, false).fused_dim(),
        144
    );
    assert_eq!(
        CrnnConfig::with_modalities(false, true, true).fused_dim(),
        80
    );
    assert_eq!(
        CrnnConfig::with_modalities(false, false, true).stream_dim(Modality::PreVisual),
        16
    );

    let a = random(&[2, 3, 128], 1);
    let b = random(&[2, 3, 16], 2);
    let c = random(&[2, 3, 4], 3);
    let fused = fuse(&[
        (Modality::Spectral, a.clone()),
        (Modality::PreAudio, b),
        (Modality::PreVisual, c),
    ])
    .unwrap();
    assert_eq!(fused.shape(), &[2, 3, 148]);
    assert_eq!(fuse(&[(Modality::Spectral, a.clone())]).unwrap(), a);
    let short = random(&[2, 2, 16], 4);
    let err = fuse(&[(Modality::Spectral, a), (Modality::PreAudio, short)]).unwrap_err();
    assert!(err.to_string().contains("alignment"), "{err}");
}

#[test]
fn projection_output_is_non_negative() {
    let config = CrnnConfig::with_modalities(false, true, true);
    let mut model = Crnn::<f32>::new(config, &mut rng(2)).unwrap();
    let x = random(&[1, 5, 4096], 9);
    let out = model
        .project_pretrained(Modality::PreVisual, &x, Mode::Train, &mut rng(0))
        .unwrap();
    assert_eq!(out.shape(), &[1, 5, 16]);
    assert!(out.data().iter().all(|&v| v >= 0.0));
    let wrong = random(&[1, 5, 100], 9);
    assert!(model
        .project_pretrained(Modality::PreVisual, &wrong, Mode::Eval, &mut rng(0))
        .is_err());
}

#[test]
fn eval_forward_is_deterministic_and_filters_modalities() {
    let spec = random(&[1, 1, 16, MEL_BINS], 5);
    let audio = random(&[1, 4, 128], 6);
    let visual = random(&[1, 4, 4096], 7);
    let full = ModelInput {
        spectral: Some(&spec),
        pre_audio: Some(&audio),
        pre_visual: Some(&visual),
        lengths: None,
    };
    let mut model = Crnn::<f32>::new(CrnnConfig::spectral_only(), &mut rng(3)).unwrap();
    let a = model.forward(&full, Mode::Eval, &mut rng(10)).unwrap();
    let b = model.forward(&full, Mode::Eval, &mut rng(99)).unwrap();
    assert_eq!(a.frame_probs, b.frame_probs);
    assert_eq!(a.clip_probs, b.clip_probs);
    let clip = a.clip(0);
    for c in 0..10 {
        let col: Vec<f32> = (0..4)
            .map(|t| clip.frame_probs.data()[t * 10 + c])
            .collect();
        let lo = col.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = col.iter().cloned().fold(0.0, f32::max);
        assert!(lo - 1e-6 <= clip.clip_probs[c] && clip.clip_probs[c] <= hi + 1e-6);
    }

    let mut fused = Crnn::<f32>::new(CrnnConfig::default(), &mut rng(3)).unwrap();
    let missing = ModelInput {
        spectral: Some(&spec),
        ..Default::default()
    };
    let err = fused
        .forward(&missing, Mode::Eval, &mut rng(0))
        .unwrap_err();
    assert!(err.to_string().contains("pre_audio"), "{err}");
}

#[test]
fn full_model_t604_gives_151_frames() {
    let config = CrnnConfig {
        conv_channels: vec![4, 4, 4, 4, 4, 4, 4],
        pre_visual_dim: 32,
        ..CrnnConfig::default()
    };
    let mut model = Crnn::<f32>::new(config, &mut rng(4)).unwrap();
    let spec = random(&[1, 1, 604, MEL_BINS], 1);
    let audio = random(&[1, 151, 128], 2);
    let visual = random(&[1, 151, 32], 3);
    let out = model
        .forward(
            &ModelInput {
                spectral: Some(&spec),
                pre_audio: Some(&audio),
                pre_visual: Some(&visual),
                lengths: None,
            },
            Mode::Eval,
            &mut rng(0),
        )
        .unwrap();
    assert_eq!(out.frame_probs.shape(), &[1, 151, 10]);
}

#[test]
fn padded_frames_are_zero_and_excluded_from_pooling() {
    let mut model = Crnn::<f32>::new(micro_config(), &mut rng(5)).unwrap();
    let spec = random(&[1, 1, 8, MEL_BINS], 1);
    let audio = random(&[1, 2, 5], 2);
    let visual = random(&[1, 2, 6], 3);
    let run =
        |model: &mut Crnn<f32>, s: &Tensor<f32>, a: &Tensor<f32>, v: &Tensor<f32>, len: usize| {
            let lengths = [len];
            model
                .forward(
                    &ModelInput {
                        spectral: Some(s),
                        pre_audio: Some(a),
                        pre_visual: Some(v),
                        lengths: Some(&lengths),
                    },
                    Mode::Eval,
                    &mut rng(0),
                )
                .unwrap()
        };
    let padded = run(&mut model, &spec, &audio, &visual, 1);
    assert_eq!(padded.frame_probs.data()[3..], [0.0; 3]);
    for c in 0..3 {
        let p = padded.clip_probs.data()[c];
        assert!((p - padded.frame_probs.data()[c]).abs() < 1e-6);
    }
}

#[test]
fn micro_crnn_gradcheck_eval_and_perturb() {
    for (mode, seed) in [(Mode::Eval, 11), (Mode::Perturb, 12)] {
        let mut probe = CrnnProbe::new(micro_config(), 1, 8, mode, seed).unwrap();
        let report = grad_check(&mut probe, DEFAULT_EPS).unwrap();
        assert!(
            report.max_relative_error < 1e-4,
            "{mode:?}: {} ({:?})",
            report.max_relative_error,
            report.per_layer()
        );
    }
}

#[test]
fn zero_model_gradcheck_is_exactly_zero() {
    let mut probe = CrnnProbe::new(micro_config(), 1, 8, Mode::Eval, 3).unwrap();
    for (_, p) in probe.model.params_mut() {
        p.value.fill(0.0);
    }
    for slot in [
        &mut probe.spectral,
        &mut probe.pre_audio,
        &mut probe.pre_visual,
    ] {
        if let Some(p) = slot.as_mut() {
            p.value.fill(0.0);
        }
    }
    probe.frame_weights.fill(0.0);
    probe.clip_weights.fill(0.0);
    let report = grad_check(&mut probe, DEFAULT_EPS).unwrap();
    assert_eq!(report.max_relative_error, 0.0);
}
