use super::annotated::AnnotatedRecord;
use super::labels::{residue_index, OrganismGroup, RegionLabel, SpType, NUM_REGIONS};

/// Sequences are truncated to their first `SEQ_LEN` residues.
pub const SEQ_LEN: usize = 70;
pub const RESIDUE_DIM: usize = 20;
pub const GROUP_DIM: usize = 4;

/// Supervision attached to an encoded example.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    pub sp_type: SpType,
    /// One label per position, `Pad` past the sequence end.
    pub regions: Vec<RegionLabel>,
    pub cs_position: Option<usize>,
}

/// Fixed-length model input for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedExample {
    pub seq_len: usize,
    /// Number of real (unpadded) positions, `≤ seq_len`.
    pub length: usize,
    /// `seq_len × 20`, row-major.
    pub residue_onehot: Vec<f32>,
    /// `seq_len × 4`, row-major; the group row repeated down every position.
    pub group_onehot: Vec<f32>,
    pub mask: Vec<f32>,
    pub targets: Option<Targets>,
}

impl EncodedExample {
    pub fn residue_row(&self, t: usize) -> &[f32] {
        &self.residue_onehot[t * RESIDUE_DIM..(t + 1) * RESIDUE_DIM]
    }

    pub fn group_row(&self, t: usize) -> &[f32] {
        &self.group_onehot[t * GROUP_DIM..(t + 1) * GROUP_DIM]
    }

    pub fn with_group(mut self, group: OrganismGroup) -> Self {
        self.group_onehot = group_rows(group, self.seq_len);
        self
    }
}

fn group_rows(group: OrganismGroup, seq_len: usize) -> Vec<f32> {
    let mut rows = vec![0.0; seq_len * GROUP_DIM];
    if let Some(g) = group.one_hot_index() {
        for t in 0..seq_len {
            rows[t * GROUP_DIM + g] = 1.0;
        }
    }
    rows
}

/// Encodes a plain sequence (upper-case residues) without supervision.
///
/// # Panics
/// On an empty sequence; parsers reject those upstream.
pub fn encode_sequence(sequence: &str, group: OrganismGroup, seq_len: usize) -> EncodedExample {
    assert!(!sequence.is_empty(), "cannot encode an empty sequence");
    let length = sequence.len().min(seq_len);
    let mut residue_onehot = vec![0.0; seq_len * RESIDUE_DIM];
    for (t, b) in sequence.bytes().take(length).enumerate() {
        if let Some(i) = residue_index(b) {
            residue_onehot[t * RESIDUE_DIM + i] = 1.0;
        }
    }
    let mut mask = vec![0.0; seq_len];
    mask[..length].fill(1.0);
    EncodedExample {
        seq_len,
        length,
        residue_onehot,
        group_onehot: group_rows(group, seq_len),
        mask,
        targets: None,
    }
}

/// Encodes an annotated record with its region and type targets.
///
/// A cleavage site past the cut-off is not representable, so it is dropped
/// from the targets while the type label is kept.
pub fn encode_record(record: &AnnotatedRecord, group: OrganismGroup, seq_len: usize) -> EncodedExample {
    let mut ex = encode_sequence(&record.sequence, group, seq_len);
    let mut regions = vec![RegionLabel::Pad; seq_len];
    regions[..ex.length].copy_from_slice(&record.annotation[..ex.length]);
    let cs_position = record.cs_position.filter(|&cs| cs <= ex.length);
    ex.targets = Some(Targets {
        sp_type: record.sp_type,
        regions,
        cs_position,
    });
    ex
}

/// One-hot rows (`seq_len × 11`) of the region targets.
pub fn region_onehot(targets: &Targets) -> Vec<f32> {
    let mut out = vec![0.0; targets.regions.len() * NUM_REGIONS];
    for (t, r) in targets.regions.iter().enumerate() {
        out[t * NUM_REGIONS + r.index()] = 1.0;
    }
    out
}
