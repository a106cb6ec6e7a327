//! File access and header conventions shared by the commands.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sigpep_core::embeddings::{EmbeddingSource, EmbeddingTable};
use sigpep_core::model::{load_checkpoint, ModelConfig, Predictor};
use sigpep_core::seqio::OrganismGroup;

use crate::error::{input_error, CliResult, OrExit};

pub fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .or_input(format!("cannot open {}", path.display()))
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .or_input(format!("cannot create {}", path.display()))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).or_input(format!("cannot create directory {}", path.display()))
}

/// Writes `bytes` to `path`, naming the path on failure.
pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .or_input(format!("cannot write {}", path.display()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let mut r = open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf).or_input(format!("cannot read {}", path.display()))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Splits a FASTA id token. `id|GROUP…` yields the group when the second
/// field names one; any other token is the id as a whole.
pub fn split_header_id(token: &str) -> (&str, Option<OrganismGroup>) {
    let mut fields = token.split('|');
    let first = fields.next().unwrap_or_default();
    match fields.next().and_then(|g| g.parse().ok()) {
        Some(g) => (first, Some(g)),
        None => (token, None),
    }
}

/// How the group one-hot is chosen per sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GroupMode {
    /// Header group, else the zero vector.
    FromHeader,
    Fixed(OrganismGroup),
    /// Always the zero vector.
    NoGroup,
}

impl GroupMode {
    pub fn from_flags(group: Option<OrganismGroup>, no_group: bool) -> Self {
        match (no_group, group) {
            (true, _) => GroupMode::NoGroup,
            (false, Some(g)) => GroupMode::Fixed(g),
            (false, None) => GroupMode::FromHeader,
        }
    }

    pub fn resolve(self, header: Option<OrganismGroup>) -> OrganismGroup {
        match self {
            GroupMode::FromHeader => header.unwrap_or(OrganismGroup::Unknown),
            GroupMode::Fixed(g) => g,
            GroupMode::NoGroup => OrganismGroup::Unknown,
        }
    }
}

/// Embedding inputs as recorded in a run manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSpec {
    Absent,
    Stub { seed: u64 },
    Table { path: PathBuf },
}

impl EmbeddingSpec {
    pub fn from_flags(path: Option<&Path>, stub_seed: Option<u64>) -> Self {
        match (path, stub_seed) {
            (Some(p), _) => EmbeddingSpec::Table { path: p.to_path_buf() },
            (None, Some(seed)) => EmbeddingSpec::Stub { seed },
            (None, None) => EmbeddingSpec::Absent,
        }
    }

    /// Loads the source and checks its width against the model.
    pub fn load(&self, model: &ModelConfig) -> CliResult<EmbeddingSource> {
        let source = match self {
            EmbeddingSpec::Absent => EmbeddingSource::Absent,
            EmbeddingSpec::Stub { seed } => EmbeddingSource::Stub {
                dim: model.embedding_dim,
                seed: *seed,
            },
            EmbeddingSpec::Table { path } => EmbeddingSource::Table(
                EmbeddingTable::load(path).or_input(format!("cannot load embeddings {}", path.display()))?,
            ),
        };
        if let Some(d) = source.dim() {
            if d != model.embedding_dim {
                return Err(input_error(format!(
                    "embeddings have {d} values per sequence, the model expects {}",
                    model.embedding_dim
                )));
            }
        }
        Ok(source)
    }
}

pub fn load_predictor(path: &Path) -> CliResult<Predictor> {
    let (config, params) = load_checkpoint(path).or_input(format!("cannot load checkpoint {}", path.display()))?;
    Predictor::new(config, params).or_input(format!("checkpoint {} is inconsistent", path.display()))
}
