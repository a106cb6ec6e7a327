use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::seqio::{SpType, NUM_TYPES};

/// Record indices of the two partitions, each ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

impl Split {
    /// Hex digest identifying the partition; equal splits hash equal.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (tag, idx) in [(b"train", &self.train), (b"val\0\0", &self.val)] {
            h.update(tag);
            h.update((idx.len() as u64).to_le_bytes());
            for &i in idx {
                h.update((i as u64).to_le_bytes());
            }
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Per type, `round(n·fraction)` records go to validation, but a type never
/// loses its last training record. Deterministic in `seed`.
pub fn stratified_split(types: &[SpType], fraction: f64, seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for k in 0..NUM_TYPES {
        let mut idx: Vec<usize> = (0..types.len()).filter(|&i| types[i].index() == k).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_val = ((n as f64 * fraction).round() as usize).min(n.saturating_sub(1));
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Split { train, val }
}
