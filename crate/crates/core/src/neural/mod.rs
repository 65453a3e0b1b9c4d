//! Small from-scratch sequence-model machinery: LSTM stacks with full
//! backpropagation through time, a sigmoid sequence classifier, an
//! encoder–decoder with attention, Adam/RMSProp and a gradient checker.

pub mod classifier;
pub mod harness;
pub mod lstm;
pub mod matrix;
pub mod network;
pub mod optim;
pub mod persist;
pub mod seq2seq;

pub use classifier::{LabeledSequence, SequenceClassifier};
pub use lstm::{lstm_cell_forward, run_stack, LayerState, LstmLayer};
pub use matrix::Matrix;
pub use network::{
    gradient_check, loss_and_grads, train, train_with, EpochControl, LossKind, Network,
    TrainConfig, TrainReport, DEFAULT_CLIP_NORM, DEFAULT_GRADCHECK_STEP,
};
pub use optim::{Optimizer, OptimizerState};
pub use persist::{ModelContainer, FORMAT_VERSION};
pub use seq2seq::{Attention, EmbeddingMode, Seq2Seq, Seq2SeqExample, Seq2SeqShape};
