//! The CRNN branch classifier, its training loop and clip-level prediction
//! with score fusion across bands.

mod crnn;
mod predict;
mod train;

pub use crnn::{
    crnn_specs, to_batch, Architecture, CrnnModel, ScoreVector, CRNN_PARAM_COUNT_50, INPUT_CHANNELS, INPUT_FRAMES,
    INPUT_MELS,
};
pub use predict::{clip_branch_scores, clip_scores, predict_clip};
pub use train::{clip_accuracy, train_branch, write_training_log, BranchData, EpochRecord, TrainConfig, TrainOutcome};
