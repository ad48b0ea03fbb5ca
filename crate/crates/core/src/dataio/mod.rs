//! On-disk formats, annotation files, synthetic datasets, and split loading.

mod container;
mod manifest;
mod split;
mod synth;
mod tsv;

pub use container::{
    decode_feature_file, encode_feature_file, find, read_feature_file, write_feature_file,
    NamedTensors, MAGIC,
};
pub use manifest::{DatasetManifest, Partition, DATASET_FORMAT, MANIFEST_FILE};
pub use split::{
    load_clip, load_partition, load_split, load_strong, ClipRecord, Dataset, WeakClip,
};
pub use synth::{
    clip_id, merge_events, output_frames_for, synthesize_clip, synthesize_dataset,
    synthesize_partition, DatasetSummary, SynthClip, SynthSpec, SynthWorld, DEFAULT_VOCABULARY,
};
pub use tsv::{
    parse_clip_list, parse_strong_tsv, parse_weak_tsv, read_clip_list, read_strong_tsv, read_text,
    read_weak_tsv, write_clip_list, write_strong_tsv, write_text, write_weak_tsv, ClipEntry,
    StrongAnnotation, WeakAnnotation, STRONG_HEADER, WEAK_HEADER,
};
