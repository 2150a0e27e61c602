//! Tensor stack, reference networks, losses and training.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod loss;
mod models;
mod network;
mod real;
mod tensor;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, GradCheckReport, FD_STEP};
pub use layers::{BatchNorm, Conv, Dense, Layer, LayerType, Mode};
pub use loss::{fused_abs, loss, mae, mse, sum_squared, FusedLoss, LossKind};
pub use models::{build_model, build_model_for, DROPOUT_RATE, TPN_PROFILE_ROWS, WINDOW};
pub use network::{Network, NetworkKind, TrainState};
pub use real::Real;
pub use tensor::Tensor;
pub use train::{
    evaluate, predict_all, train, train_fused, EpochRecord, FusedOutcome, Hyperparams, LossMode,
    SampleSource, TensorDataset, TrainHistory,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("expected {expected} inputs, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("unknown network kind {0:?}")]
    UnknownKind(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite in epoch {epoch}")]
    DivergenceDetected { epoch: u64 },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(&'static str),
    #[error("checkpoint i/o: {0}")]
    IoFailure(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    FormatError(String),
    #[error("checkpoint holds a {found} network, expected {expected}")]
    KindMismatch {
        expected: NetworkKind,
        found: NetworkKind,
    },
}
