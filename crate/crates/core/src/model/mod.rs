//! The CRNN: convolutional encoder for spectral maps, projections for
//! pretrained features, fusion by concatenation, BiGRU, frame-level sigmoid
//! head and linear pooling to clip level.

mod checkpoint;
mod config;
mod crnn;
mod gradcheck;
mod pooling;

pub use checkpoint::{checkpoint_tensors, load_checkpoint, model_from_tensors, save_checkpoint};
pub use config::{
    default_embeddings, CrnnConfig, Modality, DEFAULT_CHANNELS, FUSION_ORDER, MEL_BINS, NUM_STACKS,
    POOL_SCHEDULE, TIME_REDUCTION,
};
pub use crnn::{
    fuse, ClipForward, ConvStack, Crnn, InputGrads, ModelInput, ModelOutput, Projection,
};
pub use gradcheck::{gradcheck_suite, micro_config, CrnnProbe, GRADCHECK_TOLERANCE};
pub use pooling::{linear_pool, linear_pool_backward};
