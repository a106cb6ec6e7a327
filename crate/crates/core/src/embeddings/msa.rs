use std::io::BufRead;

use super::EmbeddingError;

pub const GAP: u8 = b'-';

/// Aligned rows of equal length; row 0 is the query.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Msa {
    ids: Vec<String>,
    rows: Vec<Vec<u8>>,
}

impl Msa {
    pub fn new(ids: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self, EmbeddingError> {
        if rows.is_empty() {
            return Err(EmbeddingError::EmptyMsa);
        }
        assert_eq!(ids.len(), rows.len(), "one id per row");
        let width = rows[0].len();
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(EmbeddingError::LengthMismatch(width, r.len()));
        }
        Ok(Self { ids, rows })
    }

    /// Rows without ids, named by their index.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self, EmbeddingError> {
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::new(ids, rows.iter().map(|r| r.as_ref().as_bytes().to_vec()).collect())
    }

    /// Parses A2M or aligned FASTA and keeps only the query's match columns:
    /// lower-case insert states and `.` are dropped, as is every column where
    /// the query has a gap.
    pub fn parse_a2m<R: BufRead>(reader: R) -> Result<Self, EmbeddingError> {
        let mut ids = Vec::new();
        let mut rows: Vec<Vec<u8>> = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if let Some(h) = line.strip_prefix('>') {
                ids.push(h.split_whitespace().next().unwrap_or_default().to_string());
                rows.push(Vec::new());
            } else if !line.is_empty() {
                let row = rows.last_mut().ok_or(EmbeddingError::Parse {
                    line: 0,
                    detail: "alignment row before the first header".into(),
                })?;
                row.extend(line.bytes().filter(|b| !b.is_ascii_lowercase() && *b != b'.'));
            }
        }
        let msa = Self::new(ids, rows)?;
        let keep: Vec<usize> = (0..msa.width()).filter(|&c| msa.rows[0][c] != GAP).collect();
        let rows = msa.rows.iter().map(|r| keep.iter().map(|&c| r[c]).collect()).collect();
        Self::new(msa.ids, rows)
    }

    pub fn depth(&self) -> usize {
        self.rows.len()
    }

    pub fn width(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.rows[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn select(&self, idx: &[usize]) -> Self {
        Self {
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Identical non-gap columns over columns where either row has a residue.
/// Two rows with no scored column are identical by convention.
pub fn pairwise_identity(a: &[u8], b: &[u8]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::LengthMismatch(a.len(), b.len()));
    }
    let (mut matches, mut scored) = (0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        if x != GAP || y != GAP {
            scored += 1;
            if x == y {
                matches += 1;
            }
        }
    }
    Ok(if scored == 0 {
        1.0
    } else {
        matches as f64 / scored as f64
    })
}

/// Differing columns; gap against residue is a difference.
pub fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

pub const DEFAULT_MSA_DEPTH: usize = 128;

/// Greedy diversity-maximizing subsample: start from the query and add the
/// row with the largest mean Hamming distance to the kept set, ties to the
/// lowest index. Kept rows stay in their original order.
pub fn subsample_msa(msa: &Msa, target: usize) -> Msa {
    let target = target.max(1);
    let n = msa.depth();
    if n <= target {
        return msa.clone();
    }
    let mut kept = vec![false; n];
    kept[0] = true;
    // The kept-set size is shared by all candidates, so the largest summed
    // distance is the largest mean.
    let mut dist_sum: Vec<usize> = (0..n).map(|j| hamming(msa.row(0), msa.row(j))).collect();
    for _ in 1..target {
        let mut best: Option<usize> = None;
        for j in (0..n).filter(|&j| !kept[j]) {
            if best.is_none_or(|b| dist_sum[j] > dist_sum[b]) {
                best = Some(j);
            }
        }
        let b = best.expect("fewer kept rows than target");
        kept[b] = true;
        for j in 0..n {
            dist_sum[j] += hamming(msa.row(b), msa.row(j));
        }
    }
    let idx: Vec<usize> = (0..n).filter(|&i| kept[i]).collect();
    msa.select(&idx)
}

/// `Σ 1/wᵢ`, `wᵢ` the mean identity of row i to every row (itself included),
/// floored at `1/N`.
pub fn neff(msa: &Msa) -> f64 {
    let n = msa.depth();
    let floor = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let total: f64 = (0..n)
                .map(|j| pairwise_identity(msa.row(i), msa.row(j)).expect("rows share a width"))
                .sum();
            1.0 / (total / n as f64).max(floor)
        })
        .sum()
}
