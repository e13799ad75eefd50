//! Small trainable model zoo: dense stacks (with an optional highway link),
//! 1-D convolutions and bidirectional LSTMs, trained with Adam on MSE.

mod checkpoint;
mod conv;
mod gradcheck;
mod lstm;
mod network;
mod spec;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use gradcheck::{grad_check, GradCheckReport};
pub use lstm::{lstm_step, LstmCell};
pub use network::{Network, Norm};
pub use spec::{Activation, Architecture, ModelSpec};
pub use train::{mse, stack_context, train, SeqPair, TrainConfig, TrainReport};
