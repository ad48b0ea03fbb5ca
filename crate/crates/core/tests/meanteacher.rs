use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sedfusion::dataio::{load_split, synthesize_dataset, Dataset, SynthSpec};
use sedfusion::meanteacher::{top_k, train, LrSchedule, TeacherState, TrainConfig};
use sedfusion::metrics::MetricConfig;
use sedfusion::model::{Crnn, CrnnConfig};

fn tiny_model() -> CrnnConfig {
    CrnnConfig {
        conv_channels: vec![2, 2, 4, 4, 4, 4, 4],
        gru_hidden: 4,
        pre_visual_dim: 8,
        ..CrnnConfig::with_modalities(true, true, true)
    }
}

fn tiny_train() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batches_per_epoch: 3,
        batch_weak: 2,
        batch_unlabeled: 2,
        ..TrainConfig::desk()
    }
}

fn tiny_dataset(dir: &std::path::Path) -> Dataset {
    let spec = SynthSpec {
        n_weak: 6,
        n_unlabeled: 4,
        n_val: 3,
        n_test: 2,
        pre_visual_dim: 8,
        ..SynthSpec::default()
    };
    synthesize_dataset(&spec, dir).unwrap();
    load_split(dir).unwrap()
}

fn state(m: &Crnn<f32>) -> Vec<Vec<u32>> {
    m.state()
        .into_iter()
        .map(|(_, t)| t.data().iter().map(|v| v.to_bits()).collect())
        .collect()
}

#[test]
fn training_is_a_pure_function_of_seed() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_dataset(dir.path());
    let metric = MetricConfig::default();
    let a = train(&tiny_model(), &tiny_train(), 4, &data, &metric).unwrap();
    let b = train(&tiny_model(), &tiny_train(), 4, &data, &metric).unwrap();
    let c = train(&tiny_model(), &tiny_train(), 5, &data, &metric).unwrap();
    assert_eq!(state(&a.student), state(&b.student));
    assert_eq!(state(&a.teacher), state(&b.teacher));
    assert_eq!(a.epochs, b.epochs);
    assert_ne!(state(&a.student), state(&c.student));
    assert_eq!(a.steps, 6);
    assert_eq!(a.epochs.len(), 2);
    assert_ne!(state(&a.student), state(&a.teacher));
    assert_ne!(state(&a.student), state(&a.initial));
}

#[test]
fn ema_extremes_copy_or_freeze() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let student = Crnn::new(tiny_model(), &mut rng).unwrap();
    let other = Crnn::new(tiny_model(), &mut rng).unwrap();
    let mut copy = TeacherState::new(&other, 0.0).unwrap();
    copy.update(&student).unwrap();
    assert_eq!(state(&copy.model), state(&student));
    let mut frozen = TeacherState::new(&other, 1.0).unwrap();
    frozen.update(&student).unwrap();
    assert_eq!(state(&frozen.model), state(&other));
    assert!(TeacherState::new(&other, 1.5).is_err());
}

#[test]
fn ema_matches_closed_form_for_constant_student() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut student = Crnn::new(tiny_model(), &mut rng).unwrap();
    let mut zero = student.clone();
    zero.state_mut().into_iter().for_each(|(_, t)| t.fill(0.0));
    student
        .state_mut()
        .into_iter()
        .for_each(|(_, t)| t.fill(2.0));
    let mut teacher = TeacherState::new(&zero, 0.9).unwrap();
    for k in 1..=50 {
        teacher.update(&student).unwrap();
        let expected = (2.0 * (1.0 - 0.9f64.powi(k))) as f32;
        for (name, t) in teacher.model.state() {
            assert!(
                t.data()
                    .iter()
                    .all(|&v| (v - expected).abs() <= f32::EPSILON * 2.0),
                "{name} at k={k}"
            );
        }
    }
}

proptest! {
    #[test]
    fn schedule_shape(peak in 1e-5f64..1e-1, ramp in 1u64..500, decay in 0.9f64..1.0, step in 0u64..2000) {
        let s = LrSchedule { peak, ramp_steps: ramp, decay_per_step: decay };
        let (a, b) = (s.lr_at(step), s.lr_at(step + 1));
        prop_assert!(a > 0.0 && a <= peak * (1.0 + 1e-12));
        if step < ramp {
            prop_assert!(b >= a);
        } else {
            prop_assert!((b / a - decay).abs() < 1e-12);
        }
    }

    #[test]
    fn top_k_picks_the_largest(scores in prop::collection::vec(0.0f64..1.0, 1..20), k_frac in 0.0f64..1.0) {
        let k = 1 + ((scores.len() - 1) as f64 * k_frac) as usize;
        let picked = top_k(&scores, k).unwrap();
        prop_assert_eq!(picked.len(), k);
        let min_picked = picked.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
        for (i, &s) in scores.iter().enumerate() {
            if !picked.contains(&i) {
                prop_assert!(s <= min_picked);
            }
        }
        prop_assert!(picked.windows(2).all(|w| scores[w[0]] >= scores[w[1]]));
    }
}
