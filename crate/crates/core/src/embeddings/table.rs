use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::EmbeddingError;

pub const BINARY_MAGIC: &[u8; 6] = b"SPEMB1";

/// Sequence-level embedding vectors keyed by sequence id.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.entries.get(id).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f32>) -> Result<(), EmbeddingError> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimInconsistency {
                id,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite { id });
        }
        match self.entries.entry(id) {
            Entry::Occupied(e) => Err(EmbeddingError::DuplicateId(e.key().clone())),
            Entry::Vacant(e) => {
                e.insert(vector);
                Ok(())
            }
        }
    }

    /// Reads either format, sniffing the binary magic.
    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let mut file = BufReader::new(std::fs::File::open(path)?);
        let head = file.fill_buf()?;
        if head.starts_with(BINARY_MAGIC) {
            Self::read_binary(file)
        } else {
            Self::read_tsv(file)
        }
    }

    /// `id<TAB>v1…vD` per line. Rows keyed `id#pos` are per-residue and are
    /// mean-pooled per `id`.
    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut dim: Option<usize> = None;
        let mut plain: Vec<(String, Vec<f32>)> = Vec::new();
        let mut residues: BTreeMap<String, BTreeMap<u64, Vec<f32>>> = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let key = fields.next().unwrap_or_default().to_string();
            let values = fields
                .map(|f| {
                    f.trim().parse::<f32>().map_err(|_| EmbeddingError::Parse {
                        line: i + 1,
                        detail: format!("'{f}' is not a number"),
                    })
                })
                .collect::<Result<Vec<f32>, _>>()?;
            let d = *dim.get_or_insert(values.len());
            if values.is_empty() || values.len() != d {
                return Err(EmbeddingError::DimInconsistency {
                    id: key,
                    expected: d,
                    found: values.len(),
                });
            }
            match key
                .rsplit_once('#')
                .and_then(|(id, pos)| Some((id, pos.parse::<u64>().ok()?)))
            {
                Some((id, pos)) => {
                    if residues
                        .entry(id.to_string())
                        .or_default()
                        .insert(pos, values)
                        .is_some()
                    {
                        return Err(EmbeddingError::DuplicateId(key));
                    }
                }
                None => plain.push((key, values)),
            }
        }
        let mut table = Self::new(dim.unwrap_or(1));
        for (id, v) in plain {
            table.insert(id, v)?;
        }
        for (id, rows) in residues {
            let pooled = mean_rows(rows.values().map(Vec::as_slice), table.dim);
            table.insert(id, pooled)?;
        }
        Ok(table)
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (id, v) in &self.entries {
            w.write_all(id.as_bytes())?;
            for x in v {
                write!(w, "\t{x}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Magic, `u32` entry count, then per entry: `u32` id length, id bytes,
    /// `u32` dim, `dim` little-endian `f32`s.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, EmbeddingError> {
        let mut magic = [0u8; 6];
        read_exact(&mut r, &mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(EmbeddingError::BadMagic);
        }
        let count = read_u32(&mut r)? as usize;
        let mut table: Option<Self> = None;
        for _ in 0..count {
            let id_len = read_u32(&mut r)? as usize;
            let mut id = vec![0u8; id_len];
            read_exact(&mut r, &mut id)?;
            let id = String::from_utf8(id).map_err(|_| EmbeddingError::Parse {
                line: 0,
                detail: "id is not UTF-8".into(),
            })?;
            let dim = read_u32(&mut r)? as usize;
            let mut raw = vec![0u8; dim * 4];
            read_exact(&mut r, &mut raw)?;
            let v: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if dim == 0 {
                return Err(EmbeddingError::DimInconsistency {
                    id,
                    expected: 1,
                    found: 0,
                });
            }
            table.get_or_insert_with(|| Self::new(dim)).insert(id, v)?;
        }
        Ok(table.unwrap_or_else(|| Self::new(1)))
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (id, v) in &self.entries {
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            w.write_all(&(v.len() as u32).to_le_bytes())?;
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

fn mean_rows<'a>(rows: impl Iterator<Item = &'a [f32]>, dim: usize) -> Vec<f32> {
    let mut acc = vec![0.0f64; dim];
    let mut n = 0usize;
    for row in rows {
        for (a, &x) in acc.iter_mut().zip(row) {
            *a += x as f64;
        }
        n += 1;
    }
    acc.into_iter().map(|a| (a / n as f64) as f32).collect()
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), EmbeddingError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => EmbeddingError::Truncated,
        _ => EmbeddingError::Io(e),
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, EmbeddingError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Deterministic unit-norm pseudo-embedding keyed by `(id, seed)`.
pub fn stub_embedding(id: &str, dim: usize, seed: u64) -> Vec<f32> {
    assert!(dim > 0, "embedding dimension must be positive");
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
    let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    raw.into_iter().map(|v| (v / norm) as f32).collect()
}

/// Where per-sequence embeddings come from at predict/train time.
#[derive(Clone, Debug, Default)]
pub enum EmbeddingSource {
    /// Zero vectors: the embedding-agnostic mode.
    #[default]
    Absent,
    /// Looked up by id; missing ids fall back to zero vectors.
    Table(EmbeddingTable),
    Stub {
        dim: usize,
        seed: u64,
    },
}

impl EmbeddingSource {
    /// `None` means "use the zero vector".
    pub fn lookup(&self, id: &str) -> Option<Vec<f32>> {
        match self {
            EmbeddingSource::Absent => None,
            EmbeddingSource::Table(t) => t.get(id).map(<[f32]>::to_vec),
            EmbeddingSource::Stub { dim, seed } => Some(stub_embedding(id, *dim, *seed)),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            EmbeddingSource::Absent => None,
            EmbeddingSource::Table(t) => Some(t.dim()),
            EmbeddingSource::Stub { dim, .. } => Some(*dim),
        }
    }
}
