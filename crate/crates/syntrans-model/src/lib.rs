//! Neural side of the syntrans testbed: a minimal reverse-mode tape over
//! dense tensors, the configurable encoder-decoder Transformer, greedy
//! decoding, the span-denoising data pipeline, and the training loops.

pub mod checkpoint;
pub mod config;
pub mod corrupt;
pub mod decode;
pub mod graph;
pub mod model;
pub mod optim;
pub mod pack;
pub mod relpos;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use config::ArchConfig;
pub use model::{Batch, Model, EOS, PAD};
pub use scalar::Scalar;
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bad architecture config: {0}")]
    BadConfig(String),
    #[error("bad batch: {0}")]
    BadBatch(String),
    #[error("{what} id {id} is outside the vocabulary of {vocab}")]
    IdOutOfRange { id: u32, vocab: usize, what: String },
    #[error("sequence length {len} exceeds max_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("target sequence is empty")]
    EmptyTarget,
    #[error("non-finite value in tensor '{tensor}'")]
    NonFinite { tensor: String },
    #[error("bad checkpoint file: {0}")]
    BadCheckpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
