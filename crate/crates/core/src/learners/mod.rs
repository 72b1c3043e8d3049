//! Softmax classifiers trained with minibatch SGD or DP-SGD, and the
//! SGD-New / SGD-Full update strategies.

mod model;
mod sgd;
mod update;

pub use model::{loss, predict_proba, Arch, Checkpoint, CheckpointLayer, Model};
pub(crate) use model::argmax;
pub use sgd::{dp_sgd_step, sgd_step, train, train_dp, train_initial, DPConfig, TrainConfig};
pub use update::{update_model, UpdateKind, UpdateStrategy, UpdateTrace};
