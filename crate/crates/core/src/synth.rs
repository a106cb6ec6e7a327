//! Synthetic annotated proteins whose signal peptides are defined by
//! type-specific motifs, for training checks that need a learnable signal.
//!
//! Every signal peptide is `M`, a charged n-region, a hydrophobic h-region and
//! a type-specific c-region motif; the last signal residue carries the
//! cleavage tag. Mature parts and `NO_SP` proteins are drawn from a fixed
//! background distribution.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seqio::{AnnotatedRecord, OrganismGroup, RegionLabel, SpType};

const BACKGROUND: &[u8] = b"ACDEFGHIKLMNPQRSTVWY";
const CHARGED: &[u8] = b"KRKRN";
const HYDROPHOBIC: &[u8] = b"LLLAAVVIFM";
/// Residues that never form a motif by accident in the mature part.
const MATURE: &[u8] = b"DEGHKNPQSTY";

fn pick(rng: &mut ChaCha8Rng, alphabet: &[u8], n: usize) -> String {
    (0..n)
        .map(|_| *alphabet.choose(rng).expect("non-empty") as char)
        .collect()
}

/// Signal part for `sp_type`; `None` for `NO_SP`.
fn signal_segment(sp_type: SpType, rng: &mut ChaCha8Rng) -> Option<String> {
    let (n_len, h_len) = (rng.gen_range(1..=4), rng.gen_range(8..=13));
    let n = pick(rng, CHARGED, n_len);
    let h = pick(rng, HYDROPHOBIC, h_len);
    let s = match sp_type {
        SpType::NoSp => return None,
        SpType::SecSpi => format!("M{n}{h}{}A{}A", pick(rng, b"STG", 1), pick(rng, b"QSE", 1)),
        // Lipobox; the conserved cysteine starts the mature protein.
        SpType::SecSpii => format!("M{n}{h}LAG"),
        SpType::SecSpiii => "MKNKLSKG".to_string(),
        SpType::TatSpi => format!("M{n}SRRFLK{h}AHA"),
        SpType::TatSpii => format!("M{n}SRRFLK{h}LSAG"),
    };
    Some(s)
}

fn signal_tag(sp_type: SpType) -> RegionLabel {
    sp_type.signal_tag().expect("signal type")
}

/// One protein of `sp_type` with total length in `length_range`.
pub fn motif_record(
    id: impl Into<String>,
    group: OrganismGroup,
    sp_type: SpType,
    length_range: std::ops::RangeInclusive<usize>,
    rng: &mut ChaCha8Rng,
) -> AnnotatedRecord {
    let total = rng.gen_range(length_range);
    let (sequence, annotation) = match signal_segment(sp_type, rng) {
        None => {
            let seq = format!("M{}", pick(rng, BACKGROUND, total.saturating_sub(1).max(1)));
            let ann = vec![RegionLabel::Globular; seq.len()];
            (seq, ann)
        }
        Some(sp) => {
            let lead = if matches!(sp_type, SpType::SecSpii | SpType::TatSpii) {
                "C"
            } else {
                ""
            };
            let mature_len = total.saturating_sub(sp.len() + lead.len()).max(5);
            let seq = format!("{sp}{lead}{}", pick(rng, MATURE, mature_len));
            let mut ann = vec![signal_tag(sp_type); sp.len() - 1];
            ann.push(RegionLabel::Cleavage);
            ann.resize(seq.len(), RegionLabel::Extra);
            (seq, ann)
        }
    };
    AnnotatedRecord::new(id, group, sp_type, 0, sequence, annotation).expect("generator emits consistent records")
}

/// Records per `(type, count)` entry, in entry order, groups drawn from the
/// four known groups. Deterministic in `seed`.
pub fn motif_dataset(spec: &[(SpType, usize)], seed: u64) -> Vec<AnnotatedRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &(t, n) in spec {
        for i in 0..n {
            let group = *OrganismGroup::KNOWN.choose(&mut rng).expect("four groups");
            out.push(motif_record(
                format!("{}_{i}", t.name().to_lowercase()),
                group,
                t,
                40..=70,
                &mut rng,
            ));
        }
    }
    out
}

/// 1000 `NO_SP` and 300/60/20/10 across four signal types.
pub const IMBALANCED_SPEC: [(SpType, usize); 5] = [
    (SpType::NoSp, 1000),
    (SpType::SecSpi, 300),
    (SpType::SecSpii, 60),
    (SpType::TatSpi, 20),
    (SpType::TatSpii, 10),
];

/// The two rarest signal types of [`IMBALANCED_SPEC`].
pub const MINORITY_TYPES: [SpType; 2] = [SpType::TatSpi, SpType::TatSpii];

/// 8 records of each of four signal types.
pub const OVERFIT_SPEC: [(SpType, usize); 4] = [
    (SpType::SecSpi, 8),
    (SpType::SecSpii, 8),
    (SpType::TatSpi, 8),
    (SpType::TatSpii, 8),
];

/// One synthetic screening input: FASTA header id, group if the header
/// carries one, and the sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScreeningRecord {
    pub id: String,
    pub group: Option<OrganismGroup>,
    pub sequence: String,
}

impl ScreeningRecord {
    /// `>id|GROUP`, or `>id` without group information.
    pub fn header(&self) -> String {
        match self.group {
            Some(g) => format!("{}|{g}", self.id),
            None => self.id.clone(),
        }
    }
}

/// Mix of the screening stream, in percent of emitted records.
const DUPLICATE_PCT: u32 = 5;
const KNOWN_PREFIX_PCT: u32 = 4;
const UNGROUPED_PCT: u32 = 2;
/// Earlier sequences a duplicate may copy; bounds generator memory.
const RECENT: usize = 256;

/// Endless deterministic stream of screening inputs: motif proteins of every
/// type, plus exact duplicates of recent records, proteins that start with a
/// known signal peptide from [`known_signal_peptides`] and records without a
/// group.
pub struct ScreeningGenerator {
    rng: ChaCha8Rng,
    known: Vec<String>,
    recent: Vec<String>,
    next_id: usize,
}

impl ScreeningGenerator {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        Self {
            rng,
            known: known_signal_peptides(seed),
            recent: Vec::with_capacity(RECENT),
            next_id: 0,
        }
    }
}

impl Iterator for ScreeningGenerator {
    type Item = ScreeningRecord;

    fn next(&mut self) -> Option<ScreeningRecord> {
        let rng = &mut self.rng;
        let roll = rng.gen_range(0..100);
        let sequence = if roll < DUPLICATE_PCT && !self.recent.is_empty() {
            self.recent.choose(rng).expect("non-empty").clone()
        } else if roll < DUPLICATE_PCT + KNOWN_PREFIX_PCT {
            let sp = self.known.choose(rng).expect("non-empty").clone();
            let n = rng.gen_range(30..=150);
            format!("{sp}{}", pick(rng, MATURE, n))
        } else {
            let t = *[
                SpType::NoSp,
                SpType::NoSp,
                SpType::NoSp,
                SpType::SecSpi,
                SpType::SecSpii,
                SpType::TatSpi,
                SpType::TatSpii,
            ]
            .choose(rng)
            .expect("non-empty");
            motif_record("", OrganismGroup::Unknown, t, 50..=200, rng).sequence
        };
        let group = if rng.gen_range(0..100) < UNGROUPED_PCT {
            None
        } else {
            Some(*OrganismGroup::KNOWN.choose(rng).expect("four groups"))
        };
        if self.recent.len() < RECENT {
            self.recent.push(sequence.clone());
        } else {
            let slot = rng.gen_range(0..RECENT);
            self.recent[slot] = sequence.clone();
        }
        let id = format!("scr_{}", self.next_id);
        self.next_id += 1;
        Some(ScreeningRecord { id, group, sequence })
    }
}

/// 40 distinct signal peptides used as the known set of a screening run.
pub fn known_signal_peptides(seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(4);
    let mut out: Vec<String> = Vec::new();
    while out.len() < 40 {
        let t = *SpType::SIGNAL.choose(&mut rng).expect("non-empty");
        let sp = signal_segment(t, &mut rng).expect("signal type");
        if !out.contains(&sp) {
            out.push(sp);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqio::{class_counts, parse_annotated_fasta, write_annotated_fasta};

    #[test]
    fn counts_and_determinism() {
        let a = motif_dataset(&IMBALANCED_SPEC, 3);
        assert_eq!(class_counts(&a).0, [1000, 300, 60, 0, 20, 10]);
        assert_eq!(a, motif_dataset(&IMBALANCED_SPEC, 3));
        assert_ne!(a, motif_dataset(&IMBALANCED_SPEC, 4));
    }

    #[test]
    fn records_are_consistent_and_round_trip() {
        let recs = motif_dataset(
            &[
                (SpType::NoSp, 5),
                (SpType::SecSpi, 5),
                (SpType::SecSpii, 5),
                (SpType::SecSpiii, 5),
                (SpType::TatSpi, 5),
                (SpType::TatSpii, 5),
            ],
            9,
        );
        for r in &recs {
            assert!(r.sequence.len() <= 75, "{}", r.sequence.len());
            match r.sp_type {
                SpType::NoSp => assert_eq!(r.cs_position, None),
                SpType::SecSpii | SpType::TatSpii => {
                    let cs = r.cs_position.unwrap();
                    assert_eq!(&r.sequence[cs - 2..cs + 1], "AGC");
                }
                _ => assert!(r.cs_position.unwrap() >= 8),
            }
        }
        let mut buf = Vec::new();
        write_annotated_fasta(&mut buf, &recs).unwrap();
        assert_eq!(parse_annotated_fasta(&buf[..]).unwrap(), recs);
    }

    #[test]
    fn screening_stream_mixes_duplicates_known_prefixes_and_ungrouped() {
        let known = known_signal_peptides(2);
        let recs: Vec<_> = ScreeningGenerator::new(2).take(2000).collect();
        assert_eq!(recs, ScreeningGenerator::new(2).take(2000).collect::<Vec<_>>());
        let mut seen = std::collections::HashSet::new();
        let dups = recs.iter().filter(|r| !seen.insert(r.sequence.clone())).count();
        let prefixed = recs
            .iter()
            .filter(|r| known.iter().any(|k| r.sequence.starts_with(k.as_str())))
            .count();
        let ungrouped = recs.iter().filter(|r| r.group.is_none()).count();
        assert!(
            dups > 20 && prefixed > 20 && ungrouped > 10,
            "{dups} {prefixed} {ungrouped}"
        );
        assert!(recs
            .iter()
            .all(|r| r.sequence.bytes().all(crate::seqio::is_valid_residue)));
    }
}
