//! Streaming screen: predict, keep confident signal peptides, drop known and
//! repeated ones, and tally what is left per type and organism group.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sigpep_core::embeddings::EmbeddingSource;
use sigpep_core::model::{Prediction, Predictor};
use sigpep_core::seqio::{write_fasta_record, FastaReader, OrganismGroup, ParseError, SpType};

use crate::args::ScreenArgs;
use crate::batch::{predict_queries, prediction_columns, prediction_line, Query};
use crate::error::{input_error, CliResult, OrExit};
use crate::inputs::{self, GroupMode};

pub const REPORT_JSON: &str = "screen_report.json";
pub const REPORT_TSV: &str = "screen_report.tsv";
pub const CANDIDATES_TSV: &str = "candidates.tsv";
pub const CANDIDATES_FASTA: &str = "candidates.fasta";
pub const PREDICTIONS_TSV: &str = "predictions.tsv";

pub const DEFAULT_MIN_PROB: f32 = 0.5;
pub const DEFAULT_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScreenConfig {
    pub min_prob: f32,
    pub dedup: bool,
    pub keep_ungrouped: bool,
    pub batch_size: usize,
    pub group_mode: GroupMode,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        Self {
            min_prob: DEFAULT_MIN_PROB,
            dedup: false,
            keep_ungrouped: false,
            batch_size: DEFAULT_BATCH,
            group_mode: GroupMode::FromHeader,
        }
    }
}

/// Exact-prefix index of known signal peptides. A sequence matches when some
/// known entry is a prefix of it, which covers full-sequence equality and a
/// predicted signal segment equal to a known one.
#[derive(Clone, Debug, Default)]
pub struct KnownSpIndex {
    entries: HashSet<Vec<u8>>,
    lengths: BTreeSet<usize>,
}

impl KnownSpIndex {
    pub fn new<S: AsRef<[u8]>>(entries: impl IntoIterator<Item = S>) -> Self {
        let mut idx = Self::default();
        for e in entries {
            let e = e.as_ref().to_ascii_uppercase();
            if !e.is_empty() {
                idx.lengths.insert(e.len());
                idx.entries.insert(e);
            }
        }
        idx
    }

    /// Reads every record of a FASTA file.
    pub fn from_fasta<R: BufRead>(reader: R) -> Result<Self, ParseError> {
        let seqs = FastaReader::new(reader)
            .map(|r| r.map(|r| r.sequence))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(seqs))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn matches(&self, sequence: &[u8]) -> bool {
        self.lengths
            .range(..=sequence.len())
            .any(|&l| self.entries.contains(&sequence[..l]))
    }
}

/// Counts per signal type, then per organism group.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally(pub BTreeMap<SpType, BTreeMap<OrganismGroup, u64>>);

impl Tally {
    pub fn add(&mut self, t: SpType, g: OrganismGroup) {
        *self.0.entry(t).or_default().entry(g).or_default() += 1;
    }

    pub fn get(&self, t: SpType, g: OrganismGroup) -> u64 {
        self.0.get(&t).and_then(|m| m.get(&g)).copied().unwrap_or(0)
    }

    pub fn by_type(&self, t: SpType) -> u64 {
        self.0.get(&t).map_or(0, |m| m.values().sum())
    }

    pub fn by_group(&self, g: OrganismGroup) -> u64 {
        self.0.values().filter_map(|m| m.get(&g)).sum()
    }

    pub fn total(&self) -> u64 {
        self.0.values().flat_map(|m| m.values()).sum()
    }

    /// Types down, groups across, with row and column totals.
    pub fn to_table(&self) -> String {
        let mut s = String::from("type");
        for g in OrganismGroup::ALL {
            let _ = write!(s, "\t{g}");
        }
        s.push_str("\ttotal\n");
        for t in SpType::SIGNAL {
            s.push_str(t.name());
            for g in OrganismGroup::ALL {
                let _ = write!(s, "\t{}", self.get(t, g));
            }
            let _ = writeln!(s, "\t{}", self.by_type(t));
        }
        s.push_str("total");
        for g in OrganismGroup::ALL {
            let _ = write!(s, "\t{}", self.by_group(g));
        }
        let _ = writeln!(s, "\t{}", self.total());
        s
    }
}

/// Funnel counts of one screening run. Every input record lands in exactly
/// one terminal bucket: malformed, ungrouped, predicted `NO_SP`, below the
/// threshold, known, duplicate, or candidate.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScreenReport {
    /// Records read, malformed ones included.
    pub total_sequences: u64,
    pub malformed: u64,
    pub ungrouped_dropped: u64,
    pub predicted: u64,
    pub predicted_no_sp: u64,
    /// Predicted type other than `NO_SP`, before any filtering.
    pub predicted_sp: u64,
    pub below_threshold: u64,
    pub known_sp_matches: u64,
    pub duplicates: u64,
    pub candidates: u64,
    pub predicted_sp_tally: Tally,
    pub candidate_tally: Tally,
    pub min_prob: f32,
    /// Most sequences held in memory at once.
    pub max_in_flight: usize,
}

impl ScreenReport {
    /// Checks the bookkeeping identities; `Err` names the first that fails.
    pub fn check(&self) -> Result<(), String> {
        let ident = [
            (
                "total = malformed + ungrouped + predicted",
                self.total_sequences,
                self.malformed + self.ungrouped_dropped + self.predicted,
            ),
            (
                "predicted = NO_SP + SP",
                self.predicted,
                self.predicted_no_sp + self.predicted_sp,
            ),
            (
                "SP = below + known + duplicates + candidates",
                self.predicted_sp,
                self.below_threshold + self.known_sp_matches + self.duplicates + self.candidates,
            ),
            ("SP tally", self.predicted_sp_tally.total(), self.predicted_sp),
            ("candidate tally", self.candidate_tally.total(), self.candidates),
        ];
        match ident.iter().find(|(_, a, b)| a != b) {
            Some((name, a, b)) => Err(format!("{name}: {a} != {b}")),
            None => Ok(()),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("stage\tcount\n");
        for (k, v) in [
            ("total_sequences", self.total_sequences),
            ("malformed", self.malformed),
            ("ungrouped_dropped", self.ungrouped_dropped),
            ("predicted", self.predicted),
            ("predicted_no_sp", self.predicted_no_sp),
            ("predicted_sp", self.predicted_sp),
            ("below_threshold", self.below_threshold),
            ("known_sp_matches", self.known_sp_matches),
            ("duplicates", self.duplicates),
            ("candidates", self.candidates),
        ] {
            let _ = writeln!(s, "{k}\t{v}");
        }
        s.push_str("\n# predicted signal peptides\n");
        s.push_str(&self.predicted_sp_tally.to_table());
        s.push_str("\n# candidates\n");
        s.push_str(&self.candidate_tally.to_table());
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub id: String,
    /// Header group; `UNKNOWN` when the header names none.
    pub group: OrganismGroup,
    pub sequence: String,
    pub sp_type: SpType,
    pub cs: usize,
    pub prob: f32,
}

impl Candidate {
    pub const TSV_HEADER: &'static str = "id\tgroup\ttype\tcs\tp_type\tsignal_peptide\tsequence";

    pub fn tsv_row(&self) -> String {
        let sp = &self.sequence[..self.cs.min(self.sequence.len())];
        format!(
            "{}\t{}\t{}\t{}\t{}\t{sp}\t{}",
            self.id,
            self.group,
            self.sp_type.name(),
            self.cs,
            self.prob,
            self.sequence
        )
    }

    /// `id|GROUP` keeps the group readable by `predict`.
    pub fn fasta_header(&self) -> String {
        format!(
            "{}|{} type={} cs={} p={}",
            self.id,
            self.group,
            self.sp_type.name(),
            self.cs,
            self.prob
        )
    }
}

/// Receives screening output as it is produced.
pub trait ScreenSink {
    fn candidate(&mut self, c: &Candidate) -> std::io::Result<()>;
    fn prediction(&mut self, _q: &Query, _p: &Prediction) -> std::io::Result<()> {
        Ok(())
    }
}

/// Collects candidates in memory; for tests and small inputs.
#[derive(Debug, Default)]
pub struct CollectSink(pub Vec<Candidate>);

impl ScreenSink for CollectSink {
    fn candidate(&mut self, c: &Candidate) -> std::io::Result<()> {
        self.0.push(c.clone());
        Ok(())
    }
}

/// Streams `reader` through the model. Holds at most one batch of records.
pub fn screen<R: BufRead, S: ScreenSink>(
    reader: R,
    predictor: &Predictor,
    embeddings: &EmbeddingSource,
    known: &KnownSpIndex,
    config: &ScreenConfig,
    sink: &mut S,
) -> CliResult<ScreenReport> {
    if config.batch_size == 0 {
        return Err(input_error("batch size must be positive"));
    }
    if !(0.0..=1.0).contains(&config.min_prob) {
        return Err(input_error(format!("min-prob {} is outside [0, 1]", config.min_prob)));
    }
    let mut report = ScreenReport {
        min_prob: config.min_prob,
        ..ScreenReport::default()
    };
    let mut seen: HashSet<String> = HashSet::new();
    let mut batch: Vec<Query> = Vec::with_capacity(config.batch_size);
    let mut process = |batch: &mut Vec<Query>, report: &mut ScreenReport| -> CliResult<()> {
        report.max_in_flight = report.max_in_flight.max(batch.len());
        let preds = predict_queries(predictor, embeddings, batch).or_abort("prediction failed")?;
        for (q, p) in batch.iter().zip(&preds) {
            sink.prediction(q, p).or_input("cannot write predictions")?;
            report.predicted += 1;
            let Some(cs) = p.predicted_cs.filter(|_| p.predicted_type != SpType::NoSp) else {
                report.predicted_no_sp += 1;
                continue;
            };
            let group = q.header_group.unwrap_or(OrganismGroup::Unknown);
            report.predicted_sp += 1;
            report.predicted_sp_tally.add(p.predicted_type, group);
            let prob = p.type_prob();
            if prob < config.min_prob {
                report.below_threshold += 1;
            } else if known.matches(q.sequence.as_bytes()) {
                report.known_sp_matches += 1;
            } else if config.dedup && !seen.insert(q.sequence.clone()) {
                report.duplicates += 1;
            } else {
                report.candidates += 1;
                report.candidate_tally.add(p.predicted_type, group);
                let c = Candidate {
                    id: q.id.clone(),
                    group,
                    sequence: q.sequence.clone(),
                    sp_type: p.predicted_type,
                    cs,
                    prob,
                };
                sink.candidate(&c).or_input("cannot write candidates")?;
            }
        }
        batch.clear();
        Ok(())
    };
    for item in FastaReader::new(reader) {
        report.total_sequences += 1;
        let rec = match item {
            Ok(r) => r,
            Err(ParseError::Io(e)) => return Err(e).or_input("cannot read screening input"),
            Err(e) => {
                log::debug!("skipping malformed record: {e}");
                report.malformed += 1;
                continue;
            }
        };
        let q = Query::from_fasta(rec, config.group_mode);
        if q.header_group.is_none() && !config.keep_ungrouped {
            report.ungrouped_dropped += 1;
            continue;
        }
        batch.push(q);
        if batch.len() == config.batch_size {
            process(&mut batch, &mut report)?;
        }
    }
    if !batch.is_empty() {
        process(&mut batch, &mut report)?;
    }
    debug_assert_eq!(report.check(), Ok(()));
    Ok(report)
}

struct FileSink<W: Write> {
    tsv: W,
    fasta: W,
    predictions: Option<W>,
}

impl<W: Write> ScreenSink for FileSink<W> {
    fn candidate(&mut self, c: &Candidate) -> std::io::Result<()> {
        writeln!(self.tsv, "{}", c.tsv_row())?;
        write_fasta_record(&mut self.fasta, &c.fasta_header(), &c.sequence)
    }

    fn prediction(&mut self, q: &Query, p: &Prediction) -> std::io::Result<()> {
        match &mut self.predictions {
            Some(w) => writeln!(w, "{}", prediction_line(&q.id, p)),
            None => Ok(()),
        }
    }
}

pub fn run(args: &ScreenArgs) -> CliResult<ScreenReport> {
    let predictor = inputs::load_predictor(&args.checkpoint)?;
    let embeddings = args.embeddings.spec().load(predictor.config())?;
    let known = match &args.known_sps {
        Some(p) => {
            KnownSpIndex::from_fasta(inputs::open(p)?).or_input(format!("malformed known-SP file {}", p.display()))?
        }
        None => KnownSpIndex::default(),
    };
    let reader = inputs::open(&args.fasta)?;
    inputs::create_dir(&args.out)?;
    let mut sink = FileSink {
        tsv: inputs::create(&args.out.join(CANDIDATES_TSV))?,
        fasta: inputs::create(&args.out.join(CANDIDATES_FASTA))?,
        predictions: if args.write_predictions {
            Some(inputs::create(&args.out.join(PREDICTIONS_TSV))?)
        } else {
            None
        },
    };
    writeln!(sink.tsv, "{}", Candidate::TSV_HEADER).or_input("cannot write candidates")?;
    if let Some(w) = &mut sink.predictions {
        writeln!(w, "{}", prediction_columns()).or_input("cannot write predictions")?;
    }
    let config = ScreenConfig {
        min_prob: args.min_prob,
        dedup: args.dedup,
        keep_ungrouped: args.keep_ungrouped,
        batch_size: args.batch_size,
        group_mode: args.groups.mode(),
    };
    let report = screen(reader, &predictor, &embeddings, &known, &config, &mut sink)?;
    for w in [Some(&mut sink.tsv), Some(&mut sink.fasta), sink.predictions.as_mut()]
        .into_iter()
        .flatten()
    {
        w.flush().or_input("cannot write screening output")?;
    }
    inputs::write_file(&args.out.join(REPORT_TSV), report.to_tsv().as_bytes())?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    inputs::write_file(&args.out.join(REPORT_JSON), json.as_bytes())?;
    log::info!(
        "{} sequences, {} predicted signal peptides, {} candidates",
        report.total_sequences,
        report.predicted_sp,
        report.candidates
    );
    Ok(report)
}
