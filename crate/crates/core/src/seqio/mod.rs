//! Sequence file parsing, tensor encoding and class statistics.

mod annotated;
mod encode;
mod fasta;
mod labels;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use annotated::{parse_annotated_fasta, signal_block_len, write_annotated_fasta, AnnotatedReader, AnnotatedRecord};
pub use encode::{
    encode_record, encode_sequence, region_onehot, EncodedExample, Targets, GROUP_DIM, RESIDUE_DIM, SEQ_LEN,
};
pub use fasta::{parse_plain_fasta, write_fasta_record, FastaReader, FastaRecord};
pub use labels::{
    is_valid_residue, residue_index, OrganismGroup, RegionLabel, SpType, AMBIGUOUS_RESIDUES, CANONICAL_RESIDUES,
    NUM_REGIONS, NUM_TYPES,
};

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("line {line}: malformed header: {detail}")]
    MalformedHeader { line: usize, detail: String },
    #[error("{id}: sequence has {sequence} residues but annotation has {annotation}")]
    LengthMismatch {
        id: String,
        sequence: usize,
        annotation: usize,
    },
    #[error("{id}: line {line}: unknown annotation character '{ch}'")]
    UnknownAnnotationChar { id: String, line: usize, ch: char },
    #[error("{id}: inconsistent type: {detail}")]
    InconsistentType { id: String, detail: String },
    #[error("{id}: illegal residue '{ch}'")]
    IllegalCharacter { id: String, ch: char },
    #[error("{id}: empty sequence")]
    EmptySequence { id: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-type record counts, in class-index order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts(pub [u64; NUM_TYPES]);

impl ClassCounts {
    pub fn get(&self, t: SpType) -> u64 {
        self.0[t.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }
}

pub fn class_counts(records: &[AnnotatedRecord]) -> ClassCounts {
    let mut n = [0u64; NUM_TYPES];
    for r in records {
        n[r.sp_type.index()] += 1;
    }
    ClassCounts(n)
}

/// Counts per organism group and type.
pub fn class_counts_by_group(records: &[AnnotatedRecord]) -> BTreeMap<OrganismGroup, ClassCounts> {
    let mut out: BTreeMap<OrganismGroup, ClassCounts> = BTreeMap::new();
    for r in records {
        out.entry(r.group).or_default().0[r.sp_type.index()] += 1;
    }
    out
}

/// Per-group type composition of the reference benchmark corpus, used to size margins and
/// weights in the absence of the data itself.
pub mod reference {
    use super::{ClassCounts, OrganismGroup};

    /// Rows in `[NO_SP, SEC_SPI, SEC_SPII, SEC_SPIII, TAT_SPI, TAT_SPII]` order.
    pub const FULL: [(OrganismGroup, [u64; 6]); 4] = [
        (OrganismGroup::Eukarya, [14356, 2040, 0, 0, 0, 0]),
        (OrganismGroup::GramPositive, [226, 142, 516, 4, 39, 8]),
        (OrganismGroup::GramNegative, [933, 356, 1087, 56, 313, 19]),
        (OrganismGroup::Archaea, [110, 44, 12, 10, 13, 6]),
    ];

    /// The held-out benchmark subset of [`FULL`].
    pub const BENCHMARK: [(OrganismGroup, [u64; 6]); 4] = [
        (OrganismGroup::Eukarya, [5581, 146, 0, 0, 0, 0]),
        (OrganismGroup::GramPositive, [81, 15, 120, 0, 18, 3]),
        (OrganismGroup::GramNegative, [133, 61, 257, 0, 51, 5]),
        (OrganismGroup::Archaea, [81, 36, 9, 0, 9, 5]),
    ];

    fn totals(rows: &[(OrganismGroup, [u64; 6]); 4]) -> ClassCounts {
        let mut n = [0; 6];
        for (_, row) in rows {
            for (acc, v) in n.iter_mut().zip(row) {
                *acc += v;
            }
        }
        ClassCounts(n)
    }

    pub fn full_counts() -> ClassCounts {
        totals(&FULL)
    }

    pub fn benchmark_counts() -> ClassCounts {
        totals(&BENCHMARK)
    }

    /// Full minus benchmark: the training portion.
    pub fn training_counts() -> ClassCounts {
        let (f, b) = (full_counts(), benchmark_counts());
        let mut n = [0; 6];
        for i in 0..6 {
            n[i] = f.0[i] - b.0[i];
        }
        ClassCounts(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_no_sp_record() {
        let recs = parse_annotated_fasta(&b">a|EUKARYA|NO_SP|0\nMK\nII\n"[..]).unwrap();
        assert_eq!(class_counts(&recs), ClassCounts([1, 0, 0, 0, 0, 0]));
    }

    #[test]
    fn reference_table_totals() {
        let full = reference::full_counts();
        assert_eq!(full.as_slice(), &[15625, 2582, 1615, 70, 365, 33]);
        assert_eq!(full.total(), 16396 + 935 + 2764 + 195);
        assert_eq!(reference::FULL[0].1[SpType::SecSpi.index()], 2040);
        let bench: u64 = reference::benchmark_counts().total();
        assert_eq!(bench, 5727 + 237 + 507 + 140);
        assert_eq!(reference::training_counts().total(), 13679);
    }

    fn arb_record() -> impl Strategy<Value = AnnotatedRecord> {
        let groups = prop::sample::select(OrganismGroup::ALL.to_vec());
        let types = prop::sample::select(SpType::ALL.to_vec());
        (
            "[A-Za-z0-9_.]{1,12}",
            groups,
            types,
            0u32..5,
            "[ACDEFGHIKLMNPQRSTVWYXBZUO]{12,90}",
            0usize..10,
            any::<bool>(),
            prop::collection::vec(prop::sample::select(vec!['I', 'M', 'O', 'G']), 90),
        )
            .prop_map(|(id, group, sp_type, part, seq, sp_len, with_c, tail)| {
                let mut ann: Vec<char> = tail[..seq.len()].to_vec();
                if let Some(tag) = sp_type.signal_tag() {
                    let n = sp_len + 2;
                    for c in ann.iter_mut().take(n) {
                        *c = tag.to_char().unwrap();
                    }
                    if with_c {
                        ann[n - 1] = 'C';
                    }
                }
                let ann = ann.into_iter().map(|c| RegionLabel::from_char(c).unwrap()).collect();
                AnnotatedRecord::new(id, group, sp_type, part, seq, ann).unwrap()
            })
    }

    proptest! {
        #[test]
        fn annotated_round_trip(records in prop::collection::vec(arb_record(), 0..6)) {
            let mut buf = Vec::new();
            write_annotated_fasta(&mut buf, &records).unwrap();
            let back = parse_annotated_fasta(&buf[..]).unwrap();
            prop_assert_eq!(&back, &records);
            prop_assert_eq!(class_counts(&back).total(), records.len() as u64);
            for r in &back {
                // The site is the last in-block tag.
                if let Some(cs) = r.cs_position {
                    prop_assert!(r.annotation[cs - 1].in_signal_block());
                    prop_assert!(r.annotation.get(cs).is_none_or(|l| !l.in_signal_block()));
                }
                prop_assert_eq!(r.cs_position.is_none(), r.sp_type == SpType::NoSp);
            }
        }
    }
}
