//! Relational GCN edge classifier.

pub mod loss;
pub mod model;
pub mod train;

pub use loss::{softmax, FocalLoss};
pub use model::{
    argmax_rows, Aggregation, Checkpoint, Forward, GraphInput, ModelConfig, Params, RgcnModel, BINDING, LINKED,
    UNLINKED,
};
pub use train::{
    batch_loss_and_grad, evaluate, gradient_check, graphs_for, metrics, prepare, train, ClassWeights, EpochStats,
    GradCheck, Metrics, TrainConfig,
};
