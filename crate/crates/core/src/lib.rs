//! Signal peptide type classification and cleavage-site tagging.

pub mod autodiff;
pub mod embeddings;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod seqio;
pub mod synth;
pub mod trainer;

pub use model::{ModelConfig, Prediction, Predictor};
pub use seqio::{AnnotatedRecord, OrganismGroup, SpType};
pub use trainer::{TrainConfig, Trainer};
