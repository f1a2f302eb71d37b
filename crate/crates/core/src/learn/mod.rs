//! Reverse-mode autodiff, the feature/attention/pose networks, the
//! IMU-consistency loss, training and mask extraction.

pub mod checkpoint;
pub mod extract;
pub mod loss;
pub mod nets;
pub mod tape;
pub mod tensor;
pub mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader};
pub use extract::{extract_mask, infer_masks, kept_blocks, pair_scores};
pub use loss::{consistency_loss, consistency_loss_value, proxy_targets};
pub use nets::{
    attention_forward, feature_grid, featurenet_forward, pair_tensor, posenet_forward, BoundNetwork,
    NetworkConfig, NetworkParams, Pose6Dof, FEATURE_STRIDE,
};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
pub use train::{
    interval_targets, read_loss_csv, train, train_from, window_step, write_loss_csv, TrainConfig, TrainOutcome,
    TrainingWindow,
};
