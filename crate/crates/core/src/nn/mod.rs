//! Dense feed-forward classifier: forward traces, input gradients and training.

mod kernels;
mod network;
mod optim;
mod train;

pub use network::{Activation, DenseLayer, ForwardTrace, LayerTrace, NetworkSpec};
pub use optim::{adam_step, AdamState};
pub use train::{evaluate_loss, train, EpochRecord, LrEvent, TrainConfig, TrainReport};

pub(crate) use kernels::{argmax, dot, softmax};
pub(crate) use network::Scratch;
