//! External sequence embeddings and MSA utilities.

mod msa;
mod table;

pub use msa::{hamming, neff, pairwise_identity, subsample_msa, Msa, DEFAULT_MSA_DEPTH, GAP};
pub use table::{stub_embedding, EmbeddingSource, EmbeddingTable, BINARY_MAGIC};

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("{id}: expected {expected} values, found {found}")]
    DimInconsistency { id: String, expected: usize, found: usize },
    #[error("duplicate embedding id '{0}'")]
    DuplicateId(String),
    #[error("{id}: non-finite embedding value")]
    NonFinite { id: String },
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error("not an embedding file (bad magic)")]
    BadMagic,
    #[error("embedding file is truncated")]
    Truncated,
    #[error("aligned rows differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("alignment has no rows")]
    EmptyMsa,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
