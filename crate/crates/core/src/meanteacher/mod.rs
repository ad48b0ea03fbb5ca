pub mod adam;
pub mod batch;
pub mod ema;
pub mod loss;
pub mod schedule;
pub mod select;
pub mod train;

pub use adam::{Adam, AdamConfig};
pub use batch::{compose_batch, predict_records, sample_indices, stack_records, Batch};
pub use ema::TeacherState;
pub use loss::{classification_loss, consistency_loss, total_loss, Outputs, PROB_CLAMP};
pub use schedule::LrSchedule;
pub use select::{multi_seed_select, top_k, SeedRun, SelectMetric, Selection};
pub use train::{
    evaluate_model, train, train_from, EpochRecord, TrainConfig, TrainOutcome, LOG_HEADER,
};
