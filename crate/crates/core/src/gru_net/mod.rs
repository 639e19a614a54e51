//! Stacked-GRU velocity estimator trained end to end with BPTT and Adam.

mod cell;
mod checkpoint;
mod grid;
mod loss;
mod network;
mod optim;
mod predict;
mod train;

#[cfg(test)]
mod gradient_check;

pub use cell::{gru_cell_step, leaky_relu, sigmoid, Gate, GruLayerParams};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, GATE_CONVENTION};
pub use grid::{hyperparameter_grid, run_grid, GridPoint, GridResult};
pub use loss::{masked_rmse_loss, masked_rmse_loss_grad};
pub use network::{Gradients, GruNetwork, DEFAULT_DROPOUT, DEFAULT_LEAKY_SLOPE};
pub use optim::{adam_step, clip_global_norm, global_norm, AdamConfig, AdamState};
pub use predict::{predict_stream, NetworkEstimate, PREDICT_CHUNK};
pub use train::{
    assemble_batch, bptt_gradients, evaluate_loss, extract_windows, normalize_inputs,
    prepare_sequence, train, train_on_datasets, EpochRecord, Sequence, TrainConfig,
    TrainingHistory, HISTORY_HEADER, MAX_EPOCHS_CEILING,
};

use thiserror::Error;

use crate::io::FormatError;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("no training or validation window of {0} samples could be extracted")]
    NoWindows(usize),
    #[error("dataset has no targets")]
    MissingTargets,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}
