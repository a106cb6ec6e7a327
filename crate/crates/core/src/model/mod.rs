//! The classifier network: encoder, convolutional path, recurrent-attention
//! trunk, cleavage-site head and cosine type head.

mod checkpoint;
mod config;
pub mod layers;
mod network;
mod predict;


pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CheckpointError, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{ConfigError, ModelConfig};
pub use network::{
    init_params, Heads, Network, ParameterStore, INPUT_EMBEDDING, INPUT_GROUPS, INPUT_RESIDUES, KEY_MASK_PREFIX,
    MASK_ENCODER, MASK_LSTM2, MASK_TRUNK,
};
pub use predict::{argmax, decode, Prediction, Predictor};

use crate::autodiff::GraphError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("embedding has {found} values, model expects {expected}")]
    EmbeddingDim { expected: usize, found: usize },
    #[error("example encoded at length {found}, model expects {expected}")]
    SeqLen { expected: usize, found: usize },
    #[error("batch holds {found} examples, graph was built for {expected}")]
    BatchSize { expected: usize, found: usize },
    #[error("parameters do not match the config: {0}")]
    ParamMismatch(String),
}
