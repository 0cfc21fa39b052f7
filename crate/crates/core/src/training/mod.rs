//! Simple-loss DDPM training, Adam, gradient checking and checkpoints.

mod adam;
mod checkpoint;
mod gradcheck;
mod loss;
mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointMeta,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use gradcheck::{check_with_fault, gradient_check, GradCheckReport, FD_STEP, REL_ERROR_FLOOR};
pub use loss::simple_loss;
pub use trainer::{train, train_on_directions, train_step, LossRecord, TrainConfig, TrainOutcome};
