use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use sedfusion::dataio::{
    load_split, read_feature_file, read_strong_tsv, read_weak_tsv, synthesize_dataset,
    synthesize_partition, write_feature_file, DatasetManifest, Partition, SynthSpec, SynthWorld,
};
use sedfusion::metrics::tags_of;
use sedfusion::model::MEL_BINS;
use sedfusion::tensor::FeatureTensor;

fn small_spec() -> SynthSpec {
    SynthSpec {
        n_weak: 6,
        n_unlabeled: 4,
        n_val: 3,
        n_test: 3,
        pre_visual_dim: 16,
        ..SynthSpec::default()
    }
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn counts_for_two_weak_clips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        n_weak: 2,
        n_unlabeled: 0,
        n_val: 0,
        n_test: 0,
        events_min: 1,
        events_max: 1,
        pre_visual_dim: 8,
        ..SynthSpec::default()
    };
    let summary = synthesize_dataset(&spec, dir.path()).unwrap();
    assert_eq!(summary.to_string(), "weak=2 unlabeled=0 val=0 test=0");
    assert_eq!(
        fs::read_dir(dir.path().join("features")).unwrap().count(),
        2
    );
    let weak = fs::read_to_string(dir.path().join("weak.tsv")).unwrap();
    assert_eq!(weak.lines().skip(1).count(), 2);
}

#[test]
fn same_seed_is_byte_identical_and_other_seed_differs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    synthesize_dataset(&small_spec(), a.path()).unwrap();
    synthesize_dataset(&small_spec(), b.path()).unwrap();
    synthesize_dataset(
        &SynthSpec {
            seed: 1,
            ..small_spec()
        },
        c.path(),
    )
    .unwrap();
    assert_eq!(read_tree(a.path()), read_tree(b.path()));
    assert_ne!(read_tree(a.path()), read_tree(c.path()));
}

#[test]
fn load_split_respects_partition_contract() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec();
    synthesize_dataset(&spec, dir.path()).unwrap();
    let ds = load_split(dir.path()).unwrap();
    assert_eq!(ds.weak.len(), 6);
    assert_eq!(ds.unlabeled.len(), 4);
    assert_eq!(ds.val.len(), 3);
    assert_eq!(ds.test.len(), 3);
    assert!(ds.strong(Partition::Val).is_some() && ds.strong(Partition::Test).is_some());
    assert!(ds.strong(Partition::Weak).is_none() && ds.strong(Partition::Unlabeled).is_none());
    for w in &ds.weak {
        let r = &w.record;
        let s = r.spectral.as_ref().unwrap();
        assert_eq!(s.dim(0), 4 * r.pre_audio.as_ref().unwrap().dim(0));
        assert_eq!(s.dim(0), 4 * r.pre_visual.as_ref().unwrap().dim(0));
        assert_eq!(s.dim(1), MEL_BINS);
    }

    // weak labels are exactly the classes of the hidden strong events
    let hidden =
        read_strong_tsv(&dir.path().join("hidden/strong_all.tsv"), &spec.vocabulary).unwrap();
    let weak = read_weak_tsv(&dir.path().join("weak.tsv"), &spec.vocabulary).unwrap();
    for w in &weak {
        let h = hidden.iter().find(|h| h.clip_id == w.clip_id).unwrap();
        assert_eq!(w.labels, tags_of(&h.events));
    }
    for clip in &ds.val {
        let h = hidden
            .iter()
            .find(|h| h.clip_id == clip.clip_id)
            .map(|h| h.events.clone())
            .unwrap_or_default();
        assert_eq!(
            ds.val_strong
                .get(&clip.clip_id)
                .cloned()
                .unwrap_or_default(),
            h
        );
    }
}

#[test]
fn tampered_pretrained_length_is_an_alignment_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        clip_duration_s: 10.0,
        short_clip_fraction: 0.0,
        n_weak: 1,
        n_unlabeled: 0,
        n_val: 0,
        n_test: 0,
        ..small_spec()
    };
    synthesize_dataset(&spec, dir.path()).unwrap();
    let path = dir.path().join("features/weak_00000.ftb");
    let mut tensors = read_feature_file(&path).unwrap();
    assert_eq!(tensors[0].1.shape(), &[604, 128]);
    let audio = &tensors[1].1;
    assert_eq!(audio.dim(0), 151);
    let cut = FeatureTensor::from_vec(
        &[150, audio.dim(1)],
        audio.data()[..150 * audio.dim(1)].to_vec(),
    )
    .unwrap();
    tensors[1].1 = cut;
    write_feature_file(&path, &tensors).unwrap();
    let err = load_split(dir.path()).unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("alignment violation: expected 151, got 150"),
        "{msg}"
    );
    assert!(msg.contains("weak_00000"), "{msg}");
}

#[test]
fn missing_feature_file_names_the_clip() {
    let dir = tempfile::tempdir().unwrap();
    synthesize_dataset(&small_spec(), dir.path()).unwrap();
    fs::remove_file(dir.path().join("features/val_00001.ftb")).unwrap();
    let msg = load_split(dir.path()).unwrap_err().to_string();
    assert!(msg.contains("val_00001"), "{msg}");
}

#[test]
fn manifest_roundtrip() {
    let m = DatasetManifest::for_synth(&small_spec());
    assert_eq!(DatasetManifest::parse(&m.to_text(), "m").unwrap(), m);
}

#[test]
fn high_snr_nearest_template_recovers_frame_labels() {
    let spec = SynthSpec {
        n_weak: 40,
        spectral_snr: 12.0,
        pre_visual_dim: 8,
        ..SynthSpec::default()
    };
    let world = SynthWorld::new(&spec);
    let clips = synthesize_partition(&spec, &world, Partition::Weak);
    let c = spec.n_classes();
    let (mut correct, mut total) = (0usize, 0usize);
    for clip in &clips {
        let active_classes: BTreeSet<usize> = tags_of(&clip.events);
        for (f, row) in clip.spectral.data().chunks(MEL_BINS).enumerate() {
            let centre = (f as f64 + 0.5) / 60.4;
            for class in 0..c {
                let score: f32 = row
                    .iter()
                    .zip(&world.templates[class])
                    .map(|(x, t)| x * t)
                    .sum();
                // smallest event gain is 0.7, so half of it separates active from idle
                let predicted = score > 0.35 * spec.spectral_snr as f32;
                let truth = active_classes.contains(&class)
                    && clip
                        .events
                        .iter()
                        .any(|e| e.class == class && e.onset <= centre && centre < e.offset);
                correct += usize::from(predicted == truth);
                total += 1;
            }
        }
    }
    let acc = correct as f64 / total as f64;
    assert!(acc >= 0.99, "accuracy {acc}");
}
